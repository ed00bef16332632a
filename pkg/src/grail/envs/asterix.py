"""Asterix-mini: dodge lane-bound enemies, collect bonuses.

Twelve columns by eight lanes of 7 px cells below a 14 px header.  Enemies
move one cell per ``enemy_period`` steps along their lane, bonuses one cell
per ``bonus_period``; whatever leaves the frame re-enters at the lane's
entry edge.  Odd lanes flow rightward and even lanes leftward, so the dodge
rules (``on_odd`` with the enemy to the left, ``on_even`` with it to the
right) always describe an approaching enemy.

With ``decoy`` enabled the real bonuses are replaced by a single
bonus-typed decoy that gives no reward and that the expert never looks at.
"""
from __future__ import annotations

import numpy as np

from ..grounding import LogicState, ObjectInventory
from .core import EnvConfig, Game, GameState, finish, step_rng

CELL = 7
HEADER = 14
MOVES = {"noop": (0, 0), "up": (0, -1), "down": (0, 1), "left": (-1, 0), "right": (1, 0)}
BONUS_REWARD = 50.0


def lane_heading(row) -> np.ndarray:
    return np.where(np.asarray(row) % 2 == 1, 1, -1)


class Asterix(Game):
    actions = ("noop", "up", "right", "left", "down")
    types = ("player", "enemy", "bonus")

    def make_inventory(self) -> ObjectInventory:
        k = self.cfg.objects_per_type
        if self.cfg.decoy == "none":
            slots = ["player"] + ["enemy"] * k + ["bonus"] * k
        else:  # the only bonus-typed entity is a decoy the expert ignores
            slots = ["player"] + ["enemy"] * k + ["bonus"]
        return ObjectInventory(self.cfg.env_name, tuple(enumerate(slots)), self.types,
                               frame=self.cfg.frame, lane_height=CELL, lane_offset=HEADER)

    def decoy_slots(self) -> tuple[int, ...]:
        return (self.inventory.max_count - 1,) if self.cfg.decoy != "none" else ()

    def kind(self) -> np.ndarray:
        return np.array([t for _, t in self.inventory.slots])

    # ------------------------------------------------------------------ dynamics

    def _free_cell(self, rng, pc, pr, min_gap=3):
        while True:
            c = int(rng.integers(self.cfg.n_cols))
            r = int(rng.integers(self.cfg.n_rows))
            if max(abs(c - pc), abs(r - pr)) >= min_gap:
                return c, r

    def _entry(self, rng, pc, pr):
        """Entry cell on a random lane, away from the player."""
        while True:
            r = int(rng.integers(self.cfg.n_rows))
            c = 0 if r % 2 == 1 else self.cfg.n_cols - 1
            if r != pr or abs(c - pc) >= 3:
                return c, r

    def reset(self, seed: int) -> GameState:
        rng = step_rng(seed, 0, 7919)
        n = self.inventory.max_count
        col = np.zeros(n, dtype=int)
        row = np.zeros(n, dtype=int)
        pc, pr = self.cfg.n_cols // 2 - 1, self.cfg.n_rows // 2
        col[0], row[0] = pc, pr
        for s in range(1, n):
            col[s], row[s] = self._free_cell(rng, pc, pr)
        heading = lane_heading(row)
        heading[0] = 0
        return GameState(seed, 0, np.ones(n, dtype=bool), col, row, heading, np.zeros(n, dtype=int))

    def step(self, state: GameState, action) -> tuple[GameState, float]:
        action = self.check_action(action)
        if state.done:
            return state, 0.0
        cfg = self.cfg
        kind = self.kind()
        dc, dr = MOVES[action]
        col, row = state.col.copy(), state.row.copy()
        pc0, pr0 = col[0], row[0]
        pc = int(np.clip(pc0 + dc, 0, cfg.n_cols - 1))
        pr = int(np.clip(pr0 + dr, 0, cfg.n_rows - 1))
        col[0], row[0] = pc, pr
        old_col = state.col
        period = np.where(kind == "enemy", cfg.enemy_period, cfg.bonus_period)
        moving = (np.arange(len(col)) > 0) & (state.t % period == 0)
        col = np.where(moving, col + state.heading, col)
        hit = (row == pr) & ((col == pc) | ((old_col == pc) & (col == pc0) & (state.row == pr)))
        hit[0] = False
        decoys = set(self.decoy_slots())
        delta, done, reason = 0.0, False, ""
        heading = state.heading.copy()
        for s in np.flatnonzero(hit):
            if kind[s] == "enemy":
                done, reason = True, "collision"
            elif s not in decoys:
                delta += BONUS_REWARD
                col[s], row[s] = self._free_cell(step_rng(state.seed, state.t + 1, s), pc, pr)
                heading[s] = lane_heading(row[s])
        for s in np.flatnonzero((col < 0) | (col >= cfg.n_cols)):
            col[s], row[s] = self._entry(step_rng(state.seed, state.t + 1, 1000 + s), pc, pr)
            heading[s] = lane_heading(row[s])
        new = state.evolve(col=col, row=row, heading=heading, done=done, reason=reason)
        return finish(self, state, new, delta)

    # ------------------------------------------------------------------ observation

    def pixel(self, col, row):
        return CELL * np.asarray(col) + CELL // 2, HEADER + CELL * np.asarray(row) + CELL // 2

    def observe(self, state: GameState) -> LogicState:
        n = self.inventory.max_count
        f = np.zeros((n, 4))
        x, y = self.pixel(state.col, state.row)
        f[:, 0] = state.present
        f[:, 1] = [self.inventory.type_id(t) for _, t in self.inventory.slots]
        f[:, 2] = np.where(state.present, x, 0)
        f[:, 3] = np.where(state.present, y, 0)
        return LogicState("asterix", f)

    def place(self, obs: LogicState, slot: int, col: int, row: int) -> LogicState:
        """Copy of ``obs`` with one slot moved to a cell (decoy placement)."""
        f = obs.features.copy()
        x, y = self.pixel(col, row)
        f[slot, 0], f[slot, 2], f[slot, 3] = 1, x, y
        return LogicState("asterix", f)
