"""Shared machinery for the grid mini-games.

Games are cell-quantized: entities occupy integer (col, row) cells and are
emitted as pixel coordinates.  A :class:`GameState` is immutable;
:func:`env_step` returns a new one.  Randomness inside a step (respawns)
comes from a generator keyed on ``(seed, t, salt)``, so a trajectory is a
pure function of the config, the episode seed and the action sequence.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..grounding import LogicState, ObjectInventory


class EnvError(ValueError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    env_name: str = "asterix-mini"
    frame: tuple[int, int] = (84, 84)
    n_cols: int = 12
    n_rows: int = 8
    objects_per_type: int = 2
    episode_length: int = 200
    seed: int = 0
    enemy_period: int = 1       # steps per cell of enemy motion
    bonus_period: int = 2
    missile_period: int = 1
    diver_period: int = 3
    oxygen_decay: float = 0.02
    p_noise: float = 0.1        # distractor-fixation probability
    expert_epsilon: float = 0.0
    decoy: str = "none"         # none | train | test
    sigma: float = 2.0          # gaze rendering bandwidth, px

    def __post_init__(self):
        if min(self.n_cols, self.n_rows, self.objects_per_type, self.episode_length) < 1:
            raise EnvError("counts must be >= 1")
        if min(self.enemy_period, self.bonus_period, self.missile_period, self.diver_period) < 1:
            raise EnvError("entity periods must be >= 1")
        if self.decoy not in ("none", "train", "test"):
            raise EnvError(f"decoy must be none, train or test, not {self.decoy!r}")
        if not 0 <= self.p_noise <= 1 or not 0 <= self.expert_epsilon <= 1:
            raise EnvError("probabilities must lie in [0, 1]")

    @property
    def game(self) -> str:
        return self.env_name.split("-", 1)[0]


@dataclass(frozen=True, eq=False)
class GameState:
    """Cell-level game state.  Arrays are indexed by inventory slot."""

    seed: int
    t: int
    present: np.ndarray
    col: np.ndarray
    row: np.ndarray
    heading: np.ndarray          # +1 / -1 horizontal motion, 0 for static
    orient: np.ndarray           # 0 facing left, 1 facing right
    score: float = 0.0
    oxygen: float = 1.0
    collected: int = 0
    done: bool = False
    reason: str = ""
    shot: tuple[int, int] | None = None   # cell hit by the last shot
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("present", "col", "row", "heading", "orient"):
            a = np.array(getattr(self, name))
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def evolve(self, **kw) -> "GameState":
        return replace(self, **kw)

    def __eq__(self, other):
        if not isinstance(other, GameState):
            return NotImplemented
        same = all(np.array_equal(getattr(self, n), getattr(other, n))
                   for n in ("present", "col", "row", "heading", "orient"))
        return same and (self.seed, self.t, self.score, self.oxygen, self.collected, self.done,
                         self.reason, self.shot) == (other.seed, other.t, other.score, other.oxygen,
                                                     other.collected, other.done, other.reason, other.shot)


@dataclass(frozen=True)
class StepRecord:
    episode_id: int
    t: int
    state: LogicState
    action: str
    fixations: tuple[tuple[float, float], ...]
    fired_rule: int | None
    score_delta: float


@dataclass(frozen=True)
class EpisodeSummary:
    episode_id: int
    score: float
    length: int
    reason: str


def step_rng(seed: int, t: int, salt: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFF, t, salt])


class Game:
    """Interface each mini-game implements."""

    actions: tuple[str, ...] = ()

    def __init__(self, cfg: EnvConfig):
        self.cfg = cfg
        self.inventory = self.make_inventory()

    def make_inventory(self) -> ObjectInventory:  # pragma: no cover - abstract
        raise NotImplementedError

    def reset(self, seed: int) -> GameState:  # pragma: no cover - abstract
        raise NotImplementedError

    def step(self, state: GameState, action: str) -> tuple[GameState, float]:  # pragma: no cover
        raise NotImplementedError

    def observe(self, state: GameState) -> LogicState:  # pragma: no cover - abstract
        raise NotImplementedError

    def decoy_slots(self) -> tuple[int, ...]:
        return ()

    def check_action(self, action) -> str:
        if isinstance(action, (int, np.integer)):
            if not 0 <= action < len(self.actions):
                raise EnvError(f"illegal action id {action}")
            return self.actions[action]
        if action not in self.actions:
            raise EnvError(f"illegal action {action!r}; expected one of {self.actions}")
        return action


def finish(game: Game, state: GameState, new: GameState, delta: float) -> tuple[GameState, float]:
    """Advance the clock, add the reward and apply the episode cap."""
    t = state.t + 1
    done, reason = new.done, new.reason
    if not done and t >= game.cfg.episode_length:
        done, reason = True, "cap"
    return new.evolve(t=t, score=state.score + delta, done=done, reason=reason), delta


def slot_types(inv: ObjectInventory) -> np.ndarray:
    return np.array([t for _, t in inv.slots])
