"""Expert demonstrations on disk and greedy-policy rollouts.

A dataset directory holds ``data.jsonl`` (one step per line), ``stats.json``
(samples, trajectories, max object count, expert score) and ``config.json``
(the :class:`EnvConfig` it was generated with).
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from ..grounding import LAYOUTS, LogicState
from ..logic import RuleBase
from .core import EnvConfig, EpisodeSummary, Game, StepRecord, step_rng
from .expert import Expert, synth_gaze

DATA_FILE = "data.jsonl"
STATS_FILE = "stats.json"
CONFIG_FILE = "config.json"


def make_game(cfg: EnvConfig) -> Game:
    from .asterix import Asterix
    from .freeway import Freeway
    from .seaquest import Seaquest
    games = {"asterix": Asterix, "seaquest": Seaquest, "freeway": Freeway}
    if cfg.game not in games:
        raise ValueError(f"unknown environment {cfg.env_name!r}")
    return games[cfg.game](cfg)


def episode_seeds(master: int, n: int) -> list[int]:
    return [int(s) for s in np.random.default_rng(master).integers(0, 2**31 - 1, size=n)]


def eval_seeds(master: int, n: int) -> list[int]:
    """Evaluation seeds, drawn from a stream disjoint from the training one."""
    return [int(s) for s in np.random.default_rng([master, 0xE7A1]).integers(0, 2**31 - 1, size=n)]


# ----------------------------------------------------------------------- serialization

def state_to_objects(state: LogicState, game: Game) -> list[dict]:
    cols = LAYOUTS[state.layout]
    out = []
    for slot, row in enumerate(state.features):
        rec = dict(zip(cols, row.tolist()))
        out.append({
            "slot": slot,
            "type": game.inventory.slot_type(slot),
            "present": int(rec["is_present"] > 0),
            "x": rec["x"], "y": rec["y"],
            "w": rec.get("width", 0.0), "h": rec.get("height", 0.0),
            "orient": int(rec.get("orientation", 0)),
        })
    return out


def objects_to_state(objects: Sequence[dict], layout: str, inv) -> LogicState:
    cols = LAYOUTS[layout]
    f = np.zeros((len(objects), len(cols)))
    for o in objects:
        vals = {"is_present": o["present"], "type": inv.type_id(o["type"]), "x": o["x"], "y": o["y"],
                "width": o["w"], "height": o["h"], "orientation": o["orient"]}
        f[o["slot"]] = [vals[c] for c in cols]
    return LogicState(layout, f)


def record_to_json(rec: StepRecord, game: Game) -> str:
    return json.dumps({
        "episode_id": rec.episode_id,
        "t": rec.t,
        "env": game.cfg.env_name,
        "objects": state_to_objects(rec.state, game),
        "action": rec.action,
        "fixations": [list(p) for p in rec.fixations],
        "fired_rule": rec.fired_rule,
        "score_delta": rec.score_delta,
    })


# ----------------------------------------------------------------------- generation

def decoy_cell(game: Game, action: str, pc: int, pr: int, rng) -> tuple[int, int]:
    """Training-time decoy placement: the cell that makes the bonus rule for
    ``action`` fire.  Falls back to a far random cell."""
    offsets = {"up": (-1, -1), "down": (1, 1), "left": (-1, 0), "right": (1, 0)}
    cfg = game.cfg
    if action in offsets:
        c, r = pc + offsets[action][0], pr + offsets[action][1]
        if 0 <= c < cfg.n_cols and 0 <= r < cfg.n_rows:
            return c, r
    return game._free_cell(rng, pc, pr)


def rollout_expert(game: Game, expert: Expert, seed: int, episode_id: int):
    """One expert episode.  Returns ``(records, summary)``."""
    cfg = game.cfg
    state = game.reset(seed)
    records = []
    decoys = game.decoy_slots()
    while not state.done:
        obs = game.observe(state)
        rng = step_rng(seed, state.t, 555)
        d = expert.decide(obs)
        action, fired = d.action, d.clause
        if cfg.expert_epsilon and rng.random() < cfg.expert_epsilon:
            action, fired = game.actions[int(rng.integers(len(game.actions)))], None
        if decoys:
            # train: the decoy sits where the bonus rule for the expert's
            # action fires; test: same placement for an unrelated action
            cue = action if cfg.decoy == "train" else game.actions[int(rng.integers(len(game.actions)))]
            c, r = decoy_cell(game, cue, int(state.col[0]), int(state.row[0]), rng)
            obs = game.place(obs, decoys[0], c, r)
        fixations = synth_gaze(obs, d, cfg, rng)
        nxt, delta = game.step(state, action)
        records.append(StepRecord(episode_id, state.t, obs, action, fixations, fired, delta))
        state = nxt
    return records, EpisodeSummary(episode_id, state.score, state.t, state.reason)


def generate_dataset(cfg: EnvConfig, rb: RuleBase, n_episodes: int, out_dir) -> dict:
    """Roll the scripted expert for ``n_episodes`` and write the dataset
    directory.  Returns the statistics block."""
    game = make_game(cfg)
    expert = Expert(rb, game)
    os.makedirs(out_dir, exist_ok=True)
    summaries = []
    samples = 0
    with open(os.path.join(out_dir, DATA_FILE), "w") as fh:
        for ep, seed in enumerate(episode_seeds(cfg.seed, n_episodes)):
            records, summary = rollout_expert(game, expert, seed, ep)
            for rec in records:
                fh.write(record_to_json(rec, game) + "\n")
            samples += len(records)
            summaries.append(summary)
    scores = [s.score for s in summaries]
    stats = {
        "env": cfg.env_name,
        "samples": samples,
        "trajectories": len(summaries),
        "max_object_count": game.inventory.max_count if n_episodes else 0,
        "expert_mean_score": float(np.mean(scores)) if scores else 0.0,
        "expert_std_score": float(np.std(scores)) if scores else 0.0,
        "episodes": [asdict(s) for s in summaries],
    }
    with open(os.path.join(out_dir, STATS_FILE), "w") as fh:
        json.dump(stats, fh, indent=1)
        fh.write("\n")
    save_config(cfg, os.path.join(out_dir, CONFIG_FILE))
    return stats


def save_config(cfg: EnvConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(asdict(cfg), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_config(path) -> EnvConfig:
    with open(path) as fh:
        raw = json.load(fh)
    raw["frame"] = tuple(raw["frame"])
    return EnvConfig(**raw)


@dataclass
class Dataset:
    cfg: EnvConfig
    states: list[LogicState]
    actions: list[str]
    episode_ids: np.ndarray
    fixations: list[tuple]
    fired: list[int | None]
    score_delta: np.ndarray

    def __len__(self):
        return len(self.states)

    def action_index(self, vocabulary: Sequence[str]) -> np.ndarray:
        return np.array([vocabulary.index(a) for a in self.actions], dtype=np.int64)

    def subset(self, mask) -> "Dataset":
        idx = np.flatnonzero(mask)
        return Dataset(self.cfg, [self.states[i] for i in idx], [self.actions[i] for i in idx],
                       self.episode_ids[idx], [self.fixations[i] for i in idx],
                       [self.fired[i] for i in idx], self.score_delta[idx])


def read_dataset(path) -> Dataset:
    """Load a dataset directory (or a ``data.jsonl`` inside one)."""
    root = path if os.path.isdir(path) else os.path.dirname(path)
    cfg = load_config(os.path.join(root, CONFIG_FILE))
    game = make_game(cfg)
    layout = game.inventory.layout
    states, actions, eps, fix, fired, deltas = [], [], [], [], [], []
    with open(os.path.join(root, DATA_FILE)) as fh:
        for line in fh:
            if not line.strip():
                continue
            r = json.loads(line)
            states.append(objects_to_state(r["objects"], layout, game.inventory))
            actions.append(r["action"])
            eps.append(r["episode_id"])
            fix.append(tuple(tuple(p) for p in r["fixations"]))
            fired.append(r["fired_rule"])
            deltas.append(r["score_delta"])
    return Dataset(cfg, states, actions, np.array(eps, dtype=np.int64), fix, fired, np.array(deltas, dtype=float))


def subsample_trajectories(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Keep a seeded ``fraction`` of whole trajectories (at least two)."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    uniq = np.unique(ds.episode_ids)
    if fraction == 1:
        return ds
    k = min(uniq.size, max(2, int(round(fraction * uniq.size))))
    keep = np.random.default_rng([seed, 0xF4AC]).choice(uniq, size=k, replace=False)
    return ds.subset(np.isin(ds.episode_ids, keep))


# ----------------------------------------------------------------------- evaluation

def rollout_scores(game: Game, policy: Callable[[list[LogicState]], np.ndarray], seeds: Sequence[int]) -> np.ndarray:
    """Run one episode per seed in lockstep; ``policy`` maps a batch of
    observations to action indices."""
    states = [game.reset(s) for s in seeds]
    while True:
        live = [i for i, s in enumerate(states) if not s.done]
        if not live:
            break
        acts = policy([game.observe(states[i]) for i in live])
        for i, a in zip(live, acts):
            states[i], _ = game.step(states[i], int(a))
    return np.array([s.score for s in states])


def evaluate_policy(game: Game, policy, n_seeds: int = 50, master_seed: int = 0) -> tuple[float, float, np.ndarray]:
    """Mean and standard deviation of the episode score over ``n_seeds``."""
    scores = rollout_scores(game, policy, eval_seeds(master_seed, n_seeds))
    return float(scores.mean()), float(scores.std()), scores


def expert_policy(expert: Expert) -> Callable:
    actions = expert.game.actions

    def act(obs):
        return np.array([actions.index(expert.decide(o).action) for o in obs])
    return act
