"""Deterministic object-centric mini-games with scripted experts."""
from __future__ import annotations

from .core import EnvConfig, EnvError, EpisodeSummary, Game, GameState, StepRecord
from .dataset import (Dataset, evaluate_policy, expert_policy, generate_dataset, make_game,
                      read_dataset, rollout_expert, subsample_trajectories)
from .expert import Decision, Expert, rule_tier, scripted_expert, synth_gaze

PRESETS = {
    "asterix-mini": dict(n_rows=8, objects_per_type=2),
    "seaquest-mini": dict(n_rows=10, objects_per_type=2, enemy_period=2),
    "freeway-mini": dict(n_rows=12, objects_per_type=1),
}


def preset(env_name: str, **overrides) -> EnvConfig:
    if env_name not in PRESETS:
        raise EnvError(f"unknown environment {env_name!r}; choose from {sorted(PRESETS)}")
    return EnvConfig(env_name=env_name, **{**PRESETS[env_name], **overrides})


def env_reset(cfg: EnvConfig, seed: int) -> GameState:
    return make_game(cfg).reset(seed)


def env_step(state: GameState, action, cfg: EnvConfig):
    """``(state', score_delta, terminal)``."""
    new, delta = make_game(cfg).step(state, action)
    return new, delta, new.done


__all__ = [
    "EnvConfig", "EnvError", "EpisodeSummary", "Game", "GameState", "StepRecord", "Dataset",
    "Decision", "Expert", "PRESETS", "preset", "env_reset", "env_step", "make_game", "rule_tier",
    "scripted_expert", "synth_gaze", "generate_dataset", "read_dataset", "rollout_expert",
    "subsample_trajectories", "evaluate_policy", "expert_policy",
]
