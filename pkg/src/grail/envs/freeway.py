"""Freeway-mini preset: cross ten lanes of traffic.

Provided as an environment preset only; no rule base or scripted expert
ships for it.  Rows 1..10 are traffic lanes with one car each, row 11 is
the start kerb and row 0 the far side (+1, back to the start).  A car hit
pushes the player back one row.
"""
from __future__ import annotations

import numpy as np

from ..grounding import LogicState, ObjectInventory
from .core import Game, GameState, finish, step_rng

CELL = 7
LANES = 10
MOVES = {"noop": 0, "up": -1, "down": 1}


class Freeway(Game):
    actions = ("noop", "up", "down")
    types = ("player", "car", "score")

    def make_inventory(self) -> ObjectInventory:
        slots = ["player"] + ["car"] * LANES + ["score"]
        return ObjectInventory(self.cfg.env_name, tuple(enumerate(slots)), self.types,
                               frame=self.cfg.frame, lane_height=CELL, lane_offset=0.0)

    def reset(self, seed: int) -> GameState:
        rng = step_rng(seed, 0, 31337)
        n = self.inventory.max_count
        col = np.zeros(n, dtype=int)
        row = np.zeros(n, dtype=int)
        heading = np.zeros(n, dtype=int)
        col[0], row[0] = self.cfg.n_cols // 2, LANES + 1
        for i in range(1, LANES + 1):
            col[i], row[i] = int(rng.integers(self.cfg.n_cols)), i
            heading[i] = 1 if i % 2 else -1
        col[-1], row[-1] = 0, 0
        return GameState(seed, 0, np.ones(n, dtype=bool), col, row, heading, np.zeros(n, dtype=int))

    def step(self, state: GameState, action) -> tuple[GameState, float]:
        action = self.check_action(action)
        if state.done:
            return state, 0.0
        col, row = state.col.copy(), state.row.copy()
        pr = int(np.clip(row[0] + MOVES[action], 0, LANES + 1))
        cars = np.arange(1, LANES + 1)
        period = 1 + cars % 3
        moving = state.t % period == 0
        col[cars] = np.where(moving, (col[cars] + state.heading[cars]) % self.cfg.n_cols, col[cars])
        delta = 0.0
        if np.any((row[cars] == pr) & (col[cars] == col[0])):
            pr = min(pr + 1, LANES + 1)
        if pr == 0:
            delta, pr = 1.0, LANES + 1
        row[0] = pr
        return finish(self, state, state.evolve(col=col, row=row), delta)

    def observe(self, state: GameState) -> LogicState:
        n = self.inventory.max_count
        f = np.zeros((n, 4))
        f[:, 0] = state.present
        f[:, 1] = [self.inventory.type_id(t) for _, t in self.inventory.slots]
        f[:, 2] = CELL * state.col + CELL // 2
        f[:, 3] = CELL * state.row + CELL // 2
        return LogicState("asterix", f)
