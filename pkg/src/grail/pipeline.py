"""End-to-end experiment plumbing: dataset -> valuations -> weights -> scores.

Grounding parameters are calibrated against crisp labels, optional gaze
modulation is applied once to the training valuations, and the clause weights
are fit by behavior cloning.  At deployment the policy sees only unmodulated
valuations; gaze never leaves the training loop.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace
from importlib import resources

import numpy as np

from . import predicates
from .envs import Dataset, Game, make_game, subsample_trajectories
from .gaze import GazeModelParams, fit_gaze_model, modulate_batch, predict_heatmap, render_heatmap
from .grounding import (AtomIndex, SoftPredicateParams, build_atom_index, calibrate_predicates,
                        ground_batch, oracle_batch)
from .learning import TrainConfig, TrainReport, train
from .logic import RuleBase, errors, parse_rulebase, validate_rulebase
from .reasoner import (InferenceGraph, ReasonerConfig, action_scores, compile_graph, load_weights,
                       loss_and_grad, save_weights)

SHIPPED_RULES = ("asterix", "seaquest")


@dataclass(frozen=True)
class ExperimentConfig:
    rules: str = "asterix"
    use_gaze: bool = True
    gaze_source: str = "recorded"     # recorded fixations, or the fitted gaze model
    gaze_scale: str = "peak"
    fraction: float = 1.0
    calibrate: bool = True
    calibration_frames: int = 400
    calibration_steps: int = 150
    gaze_fit_frames: int = 200
    gaze_fit_steps: int = 60
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    # a sharp policy softmax; at temperature 1 every weight saturates at 1
    reasoner: ReasonerConfig = field(default_factory=lambda: ReasonerConfig(policy_temperature=0.05))

    def __post_init__(self):
        if self.gaze_source not in ("recorded", "predicted"):
            raise ValueError("gaze_source must be 'recorded' or 'predicted'")
        if not 0 < self.fraction <= 1:
            raise ValueError("fraction must lie in (0, 1]")


def load_rules(spec: str, env: str) -> tuple[RuleBase, str]:
    """Parse a rule file path, or the name of a shipped rule base."""
    if spec in SHIPPED_RULES:
        text = resources.files("grail").joinpath(f"rules/{spec}.rules").read_text()
    else:
        with open(spec) as fh:
            text = fh.read()
    rb = parse_rulebase(text, predicates.signatures(env))
    bad = errors(validate_rulebase(rb))
    if bad:
        raise ValueError("invalid rule base:\n" + "\n".join(str(d) for d in bad))
    return rb, text


@dataclass(eq=False)
class Model:
    """A rule base compiled over one game's inventory."""

    rb: RuleBase
    game: Game
    idx: AtomIndex
    graph: InferenceGraph

    @classmethod
    def build(cls, rb: RuleBase, game: Game) -> "Model":
        idx = build_atom_index(rb, game.inventory)
        return cls(rb, game, idx, compile_graph(rb, idx, game.actions))


def calibrate(states, idx: AtomIndex, exp: ExperimentConfig) -> SoftPredicateParams:
    params = SoftPredicateParams()
    if not exp.calibrate or not states:
        return params
    pick = np.linspace(0, len(states) - 1, min(exp.calibration_frames, len(states))).round().astype(int)
    chosen = [states[i] for i in np.unique(pick)]
    Y = oracle_batch(chosen, idx)
    res = calibrate_predicates(zip(chosen, Y), params, idx, steps=exp.calibration_steps)
    return res.params


def heatmaps(ds: Dataset, model: Model, exp: ExperimentConfig):
    dims = ds.cfg.frame
    recorded = [render_heatmap(fx, ds.cfg.sigma, dims) for fx in ds.fixations]
    if exp.gaze_source == "recorded":
        return recorded
    inv = model.game.inventory
    pick = np.linspace(0, len(ds) - 1, min(exp.gaze_fit_frames, len(ds))).round().astype(int)
    frames = [(ds.states[i], recorded[i]) for i in np.unique(pick)]
    phi = fit_gaze_model(frames, GazeModelParams.neutral(inv), inv, steps=exp.gaze_fit_steps).params
    return [predict_heatmap(s, phi, inv, dims) for s in ds.states]


def training_valuations(ds: Dataset, model: Model, params: SoftPredicateParams, exp: ExperimentConfig):
    V = ground_batch(ds.states, params, model.idx)
    if exp.use_gaze:
        V = modulate_batch(V, heatmaps(ds, model, exp), model.idx, ds.states, exp.gaze_scale)
    return V


@dataclass(eq=False)
class TrainedPolicy:
    model: Model
    weights: np.ndarray
    params: SoftPredicateParams
    report: TrainReport | None
    reasoner: ReasonerConfig

    def retarget(self, game: Game) -> "TrainedPolicy":
        """Same weights and predicates, compiled over another inventory."""
        return replace(self, model=Model.build(self.model.rb, game))

    def scores(self, states) -> np.ndarray:
        V = ground_batch(states, self.params, self.model.idx)
        return np.atleast_2d(action_scores(V, self.weights, self.model.graph, self.reasoner))

    def act(self, states) -> np.ndarray:
        return np.argmax(self.scores(states), axis=1)

    def loss(self, ds: Dataset) -> float:
        """Mean negative log-likelihood of the dataset's actions, on
        unmodulated valuations."""
        V = ground_batch(ds.states, self.params, self.model.idx)
        want = ds.action_index(self.model.game.actions)
        return float(loss_and_grad(V, want, self.weights, self.model.graph, self.reasoner, need_grad=False)[0])

    def accuracy(self, ds: Dataset) -> float:
        if not len(ds):
            return float("nan")
        want = ds.action_index(self.model.game.actions)
        return float(np.mean(self.act(ds.states) == want))


def fit(ds: Dataset, rb: RuleBase, exp: ExperimentConfig, log_path=None) -> TrainedPolicy:
    """Train clause weights on a dataset (``exp.fraction`` of its trajectories)."""
    ds = subsample_trajectories(ds, exp.fraction, exp.seed)
    model = Model.build(rb, make_game(ds.cfg))
    params = calibrate(ds.states, model.idx, exp)
    V = training_valuations(ds, model, params, exp)
    actions = ds.action_index(model.game.actions)
    report = train(V, actions, ds.episode_ids, model.graph, exp.train, exp.reasoner, log_path=log_path)
    return TrainedPolicy(model, report.weights, params, report, exp.reasoner)


# ----------------------------------------------------------------------- persistence

def save_policy(path, policy: TrainedPolicy, extra=None) -> None:
    header = {"predicates": json.dumps(policy.params.to_dict(), sort_keys=True),
              "env": policy.model.game.cfg.env_name}
    header.update(extra or {})
    save_weights(path, policy.weights, policy.model.rb, policy.reasoner, header)


def load_policy(path, rb: RuleBase, game: Game) -> TrainedPolicy:
    w, rcfg, header, _ = load_weights(path, rb)
    raw = json.loads(header.get("predicates", "{}")) or SoftPredicateParams().to_dict()
    params = SoftPredicateParams(raw["threshold"], raw["temperature"])
    return TrainedPolicy(Model.build(rb, game), w, params, None, rcfg)


def write_report_log(path, report: TrainReport) -> None:
    with open(path, "w") as fh:
        for e, (tl, vl, lr) in enumerate(zip(report.train_losses, report.val_losses, report.lrs)):
            fh.write(json.dumps({"epoch": e, "train_loss": tl, "val_loss": vl, "lr": lr}) + "\n")
        fh.write(json.dumps({"best_epoch": report.best_epoch, "best_val_loss": report.best_val_loss,
                             "stop_reason": report.stop_reason}) + "\n")


def config_dump(exp: ExperimentConfig) -> dict:
    return asdict(exp)
