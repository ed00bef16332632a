"""``grail`` command line: gen-data, train, eval, inspect, sweep, generalize.

Every verb accepts ``--config FILE``, a plain ``key = value`` file (``#``
starts a comment).  Keys are flag names with underscores (``no_gaze``,
``episodes``) or training / reasoner fields (``learning_rate``,
``policy_temperature``).  Flags given on the command line win over the file.

Tables are printed for humans; ``--json`` prints one JSON object per row
instead, and with ``--out`` the rows are also written to a ``.jsonl`` file.
Exit status: 0 on success, 1 on a runtime failure, 2 on a usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .envs import (EnvError, evaluate_policy, generate_dataset, make_game, preset, read_dataset,
                   subsample_trajectories)
from .learning import TrainConfig, TrainingError
from .logic import RuleError
from .pipeline import (ExperimentConfig, Model, TrainedPolicy, fit, load_policy, load_rules,
                       save_policy, write_report_log)
from .reasoner import ReasonerConfig, WeightFileError, load_weights, rank_rules
from .grounding import SoftPredicateParams

WEIGHTS_FILE = "weights.txt"
FRACTIONS = (0.1, 0.25, 0.5, 0.75, 1.0)

DEFAULTS = dict(env="asterix-mini", rules=None, data=None, out=None, seed=0, objects=None,
                fraction=1.0, no_gaze=False, seeds=50, jobs=1, episodes=20, weights=None,
                test_data=None, fractions=None, decoy="none", json=False)
TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed", "lr_grid"}
REASONER_KEYS = {f.name for f in fields(ReasonerConfig)}
EXPERIMENT_KEYS = {"gaze_source", "gaze_scale", "calibrate", "calibration_frames", "calibration_steps"}


class UsageError(Exception):
    pass


@dataclass
class Row:
    """One row of a results table."""
    method: str
    mean: float
    std: float
    n_seeds: int
    accuracy: float | None = None
    fraction: float | None = None
    train_objects: int | None = None
    eval_objects: int | None = None

    def __post_init__(self):
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")

    def record(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


# ----------------------------------------------------------------------- config

def _coerce(raw: str):
    low = raw.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw


def read_config(path) -> dict:
    """Parse a ``key = value`` experiment file."""
    out = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in DEFAULTS and key not in TRAIN_KEYS | REASONER_KEYS | EXPERIMENT_KEYS:
                raise UsageError(f"{path}:{n}: unknown key {key!r}")
            out[key] = _coerce(val)
    return out


def resolve(args) -> argparse.Namespace:
    """Merge flags over the config file over the defaults."""
    conf = read_config(args.config) if args.config else {}
    merged = dict(DEFAULTS)
    merged.update({k: v for k, v in conf.items() if k in DEFAULTS})
    given = {k: v for k, v in vars(args).items() if v is not None}
    merged.update(given)
    merged["extra"] = {k: v for k, v in conf.items() if k not in DEFAULTS}
    return argparse.Namespace(**merged)


def experiment(a) -> ExperimentConfig:
    ex = a.extra
    tc = TrainConfig(seed=a.seed, **{k: v for k, v in ex.items() if k in TRAIN_KEYS})
    base = ExperimentConfig()
    rc = replace(base.reasoner, **{k: v for k, v in ex.items() if k in REASONER_KEYS})
    return replace(base, rules=a.rules or "asterix", use_gaze=not a.no_gaze, fraction=a.fraction,
                   seed=a.seed, train=tc, reasoner=rc,
                   **{k: v for k, v in ex.items() if k in EXPERIMENT_KEYS})


def require(a, *names):
    for n in names:
        if getattr(a, n) in (None, ""):
            raise UsageError(f"--{n.replace('_', '-')} is required")


def env_config(a, **over):
    kw = {"seed": a.seed, "decoy": a.decoy}
    if a.objects is not None:
        kw["objects_per_type"] = a.objects
    kw.update(over)
    return preset(a.env, **kw)


def default_rules(env: str) -> str:
    return env.split("-", 1)[0]


# ----------------------------------------------------------------------- output

def render(rows: list[Row]) -> str:
    head = f"{'method':<12}{'fraction':>9}{'train':>6}{'eval':>5}  {'score':>22}{'seeds':>6}{'accuracy':>10}"
    lines = [head]
    for r in rows:
        frac = "" if r.fraction is None else f"{r.fraction:g}"
        acc = "" if r.accuracy is None else f"{r.accuracy:.4f}"
        tr = "" if r.train_objects is None else str(r.train_objects)
        ev = "" if r.eval_objects is None else str(r.eval_objects)
        score = f"{r.mean:.1f} ± {r.std:.1f}"
        lines.append(f"{r.method:<12}{frac:>9}{tr:>6}{ev:>5}  {score:>22}{r.n_seeds:>6}{acc:>10}")
    return "\n".join(lines)


def emit(a, rows: list[Row], name: str) -> None:
    recs = [json.dumps(r.record(), sort_keys=True) for r in rows]
    if a.out:
        os.makedirs(a.out, exist_ok=True)
        with open(os.path.join(a.out, name), "w") as fh:
            fh.write("".join(s + "\n" for s in recs))
    print("\n".join(recs) if a.json else render(rows))


# ----------------------------------------------------------------------- verbs

def cmd_gen_data(a) -> int:
    require(a, "out")
    cfg = env_config(a)
    rb, _ = load_rules(a.rules or default_rules(a.env), a.env)
    stats = generate_dataset(cfg, rb, a.episodes, a.out)
    print(json.dumps({k: v for k, v in stats.items() if k != "episodes"}, sort_keys=True))
    return 0


def _method(use_gaze: bool) -> str:
    return "GRAIL" if use_gaze else "NSFR-IL"


def cmd_train(a) -> int:
    require(a, "data", "out")
    ds = read_dataset(a.data)
    rb, _ = load_rules(a.rules or default_rules(ds.cfg.env_name), ds.cfg.env_name)
    exp = experiment(a)
    os.makedirs(a.out, exist_ok=True)
    used = subsample_trajectories(ds, exp.fraction, exp.seed)
    pol = fit(ds, rb, exp)
    rep = pol.report
    write_report_log(os.path.join(a.out, "train_log.jsonl"), rep)
    save_policy(os.path.join(a.out, WEIGHTS_FILE), pol,
                {"method": _method(exp.use_gaze), "fraction": repr(exp.fraction), "seed": exp.seed})
    summary = {
        "method": _method(exp.use_gaze),
        "fraction": exp.fraction,
        "trajectories_total": int(np.unique(ds.episode_ids).size),
        "trajectories_used": int(np.unique(used.episode_ids).size),
        "samples_used": len(used),
        "best_epoch": rep.best_epoch,
        "best_val_loss": rep.best_val_loss,
        "epochs_run": rep.epochs_run,
        "stop_reason": rep.stop_reason,
    }
    if a.test_data:
        test = read_dataset(a.test_data)
        held = pol.retarget(make_game(test.cfg))
        summary["test_loss"] = held.loss(test)
        summary["test_accuracy"] = held.accuracy(test)
    with open(os.path.join(a.out, "report.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(a.out, "config.json"), "w") as fh:
        json.dump(asdict(exp), fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(json.dumps(summary, sort_keys=True))
    return 0


def _policy(a, game):
    rules = a.rules or default_rules(a.env)
    rb, _ = load_rules(rules, a.env)
    if a.weights == "ones":
        pol = TrainedPolicy(Model.build(rb, game), np.ones(len(rb.clauses)), SoftPredicateParams(),
                            None, ExperimentConfig().reasoner)
        return pol, "rules-W1"
    path = weight_path(a)
    return load_policy(path, rb, game), load_weights(path)[2].get("method", "policy")


def weight_path(a) -> str:
    path = os.path.join(a.weights, WEIGHTS_FILE) if os.path.isdir(a.weights) else a.weights
    if not os.path.exists(path):
        raise FileNotFoundError(f"no weight file at {path}")
    return path


def cmd_eval(a) -> int:
    require(a, "weights")
    if a.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    game = make_game(env_config(a, decoy="none"))
    pol, name = _policy(a, game)
    mean, std, _ = evaluate_policy(game, pol.act, a.seeds, a.seed)
    acc = None
    if a.test_data:
        test = read_dataset(a.test_data)
        acc = pol.retarget(make_game(test.cfg)).accuracy(test)
    emit(a, [Row(name, mean, std, a.seeds, acc, eval_objects=game.cfg.objects_per_type)], "eval.jsonl")
    return 0


def cmd_inspect(a) -> int:
    require(a, "weights")
    path = weight_path(a)
    rb = None
    if a.rules:
        env = load_weights(path)[2].get("env", a.env)
        rb, _ = load_rules(a.rules, env)
    w, _, _, texts = load_weights(path, rb)
    rows = rank_rules(w, texts)
    if a.json:
        for head, cond, x in rows:
            print(json.dumps({"rule": head, "primary_condition": cond, "weight": x}, sort_keys=True))
        return 0
    print(f"{'Rule':<28} | {'Primary condition':<36} | Weight")
    for head, cond, x in rows:
        print(f"{head:<28} | {cond:<36} | {x:.4f}")
    return 0


# sweep / generalize cells run in worker processes, so they take plain data

def _sweep_cell(job):
    data, rules, exp, seeds, master, test = job
    ds = read_dataset(data)
    rb, _ = load_rules(rules, ds.cfg.env_name)
    pol = fit(ds, rb, exp)
    game = make_game(replace(ds.cfg, decoy="none"))
    mean, std, _ = evaluate_policy(game, pol.act, seeds, master)
    acc = pol.accuracy(read_dataset(test)) if test else None
    return Row(_method(exp.use_gaze), mean, std, seeds, acc, fraction=exp.fraction)


def _run(cells, fn, jobs):
    if jobs <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, cells))


def cmd_sweep(a) -> int:
    require(a, "data")
    ds = read_dataset(a.data)
    rules = a.rules or default_rules(ds.cfg.env_name)
    fracs = FRACTIONS if a.fractions is None else tuple(float(f) for f in str(a.fractions).split(","))
    base = experiment(a)
    methods = (False,) if a.no_gaze else (True, False)
    cells = [(a.data, rules, replace(base, use_gaze=g, fraction=f), a.seeds, a.seed, a.test_data)
             for g in methods for f in fracs]
    rows = _run(cells, _sweep_cell, a.jobs)
    emit(a, rows, "sweep.jsonl")
    if a.out:
        with open(os.path.join(a.out, "sweep.csv"), "w") as fh:
            fh.write("method,fraction,mean,std,accuracy\n")
            for r in rows:
                fh.write(f"{r.method},{r.fraction!r},{r.mean!r},{r.std!r},{'' if r.accuracy is None else repr(r.accuracy)}\n")
    return 0


def _generalize_cell(job):
    cfg, rules, exp, n_episodes, eval_counts, seeds, master, root = job
    rb, _ = load_rules(rules, cfg.env_name)
    d = os.path.join(root, f"data_k{cfg.objects_per_type}")
    generate_dataset(cfg, rb, n_episodes, d)
    pol = fit(read_dataset(d), rb, exp)
    rows = []
    for k in eval_counts:
        game = make_game(replace(cfg, objects_per_type=k))
        mean, std, _ = evaluate_policy(game, pol.retarget(game).act, seeds, master)
        rows.append(Row(_method(exp.use_gaze), mean, std, seeds,
                        train_objects=cfg.objects_per_type, eval_objects=k))
    return rows


def cmd_generalize(a) -> int:
    require(a, "out")
    rules = a.rules or default_rules(a.env)
    exp = experiment(a)
    train_counts = (1, 2) if a.objects is None else (a.objects,)
    cells = [(env_config(a, objects_per_type=k), rules, exp, a.episodes, (1, 2, 3), a.seeds, a.seed, a.out)
             for k in train_counts]
    os.makedirs(a.out, exist_ok=True)
    rows = [r for block in _run(cells, _generalize_cell, a.jobs) for r in block]
    emit(a, rows, "generalize.jsonl")
    return 0


# ----------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="grail", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="verb", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value experiment file; flags win")
    common.add_argument("--rules", help="rule file, or a shipped rule base name")
    common.add_argument("--data", help="dataset directory")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--env", help="environment preset (default asterix-mini)")
    common.add_argument("--objects", type=int, help="objects per type")
    common.add_argument("--fraction", type=float, help="fraction of trajectories to train on")
    common.add_argument("--no-gaze", action="store_const", const=True, help="NSFR-IL ablation")
    common.add_argument("--seeds", type=int, help="evaluation seeds (default 50)")
    common.add_argument("--jobs", type=int, help="worker processes for independent cells")
    common.add_argument("--json", action="store_const", const=True, help="print JSON rows")
    specs = {
        "gen-data": ("generate expert demonstrations", cmd_gen_data),
        "train": ("fit clause weights", cmd_train),
        "eval": ("roll a policy out over seeds", cmd_eval),
        "inspect": ("list rules by weight", cmd_inspect),
        "sweep": ("accuracy and score against training fraction", cmd_sweep),
        "generalize": ("train and evaluate across object counts", cmd_generalize),
    }
    for name, (help_, fn) in specs.items():
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        if name in ("gen-data", "generalize"):
            sp.add_argument("--episodes", type=int, help="expert episodes (default 20)")
        if name == "gen-data":
            sp.add_argument("--decoy", choices=("none", "train", "test"), help="spurious distractor mode")
        if name in ("eval", "inspect"):
            sp.add_argument("--weights", help="weight file or train output directory ('ones' for W=1)")
        if name in ("train", "eval", "sweep"):
            sp.add_argument("--test-data", help="held-out dataset for action accuracy")
        if name == "sweep":
            sp.add_argument("--fractions", help="comma-separated fractions (default 0.1,...,1.0)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    func = args.func
    del args.func, args.verb
    try:
        a = resolve(args)
        return func(a)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"grail: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuleError, EnvError, WeightFileError, TrainingError, KeyError) as exc:
        print(f"grail: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
