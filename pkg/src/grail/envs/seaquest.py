"""Seaquest-mini: a submarine on a 12 x 10 grid of 7 px cells.

Row 0 is the surface; rows below it are water.  Enemy subs, their missiles
and divers drift horizontally and re-enter from a random edge when they
leave the frame.  Firing is hitscan along the player's row in the facing
direction (+20).  Oxygen drains under water and refills at the surface,
where collected divers are delivered (+50 each).  Touching an enemy or a
missile, or running out of oxygen, ends the episode.
"""
from __future__ import annotations

import numpy as np

from ..grounding import LogicState, ObjectInventory
from .core import EnvConfig, Game, GameState, finish, step_rng

CELL = 7
TOP = 14
MOVES = {"noop": (0, 0), "fire": (0, 0), "up": (0, -1), "down": (0, 1), "left": (-1, 0), "right": (1, 0)}
KILL_REWARD = 20.0
DIVER_REWARD = 50.0
CAPACITY = 6
TYPES = ("player", "enemy", "diver", "missile", "player_missile", "oxygen_bar", "collected_diver", "hud")


def full_inventory(env_name: str = "seaquest") -> ObjectInventory:
    """The 49-slot inventory of the original game's object extractor."""
    counts = (("player", 1), ("enemy", 25), ("diver", 4), ("missile", 4), ("player_missile", 1),
              ("oxygen_bar", 1), ("collected_diver", 6), ("hud", 7))
    slots = [t for t, k in counts for _ in range(k)]
    return ObjectInventory(env_name, tuple(enumerate(slots)), TYPES, divers_capacity=CAPACITY)


class Seaquest(Game):
    actions = ("noop", "fire", "up", "right", "left", "down")

    def make_inventory(self) -> ObjectInventory:
        k = self.cfg.objects_per_type
        slots = (["player"] + ["enemy"] * k + ["diver"] * k + ["missile"] * k
                 + ["player_missile", "oxygen_bar"] + ["collected_diver"] * CAPACITY)
        return ObjectInventory(self.cfg.env_name, tuple(enumerate(slots)), TYPES, frame=self.cfg.frame,
                               lane_height=CELL, lane_offset=TOP, divers_capacity=CAPACITY)

    def kind(self) -> np.ndarray:
        return np.array([t for _, t in self.inventory.slots])

    def _movers(self):
        kind = self.kind()
        return np.flatnonzero(np.isin(kind, ("enemy", "diver", "missile")))

    def _spawn(self, rng, pc, pr, anywhere=False):
        """Cell and heading for a drifting entity, kept off the player's row
        neighborhood."""
        while True:
            r = int(rng.integers(1, self.cfg.n_rows))
            h = 1 if rng.random() < 0.5 else -1
            c = int(rng.integers(self.cfg.n_cols)) if anywhere else (0 if h == 1 else self.cfg.n_cols - 1)
            if max(abs(c - pc), abs(r - pr)) >= 3:
                return c, r, h

    def reset(self, seed: int) -> GameState:
        rng = step_rng(seed, 0, 104729)
        n = self.inventory.max_count
        kind = self.kind()
        col = np.zeros(n, dtype=int)
        row = np.zeros(n, dtype=int)
        heading = np.zeros(n, dtype=int)
        present = np.isin(kind, ("player", "enemy", "diver", "missile", "oxygen_bar"))
        pc, pr = self.cfg.n_cols // 2 - 1, 0
        col[0], row[0] = pc, pr
        for s in self._movers():
            col[s], row[s], heading[s] = self._spawn(rng, pc, pr, anywhere=True)
        orient = np.where(heading > 0, 1, 0)
        orient[0] = 1
        return GameState(seed, 0, present, col, row, heading, orient)

    def step(self, state: GameState, action) -> tuple[GameState, float]:
        action = self.check_action(action)
        if state.done:
            return state, 0.0
        cfg = self.cfg
        kind = self.kind()
        col, row, heading = state.col.copy(), state.row.copy(), state.heading.copy()
        orient = state.orient.copy()
        pc0, pr0 = col[0], row[0]
        dc, dr = MOVES[action]
        pc = int(np.clip(pc0 + dc, 0, cfg.n_cols - 1))
        pr = int(np.clip(pr0 + dr, 0, cfg.n_rows - 1))
        col[0], row[0] = pc, pr
        if action in ("left", "right"):
            orient[0] = 0 if action == "left" else 1
        delta, shot = 0.0, None
        respawn = []
        if action == "fire":
            ahead = (kind == "enemy") & (row == pr) & ((col - pc) * (1 if orient[0] else -1) > 0)
            if ahead.any():
                targets = np.flatnonzero(ahead)
                s = targets[np.argmin(np.abs(col[targets] - pc))]
                shot = (int(col[s]), int(row[s]))
                delta += KILL_REWARD
                respawn.append(s)
        old_col = col.copy()
        period = np.select([kind == "enemy", kind == "missile", kind == "diver"],
                           [cfg.enemy_period, cfg.missile_period, cfg.diver_period], 1)
        moving = np.isin(kind, ("enemy", "diver", "missile")) & (state.t % period == 0)
        col = np.where(moving, col + heading, col)
        hit = (row == pr) & ((col == pc) | ((old_col == pc) & (col == pc0) & (pr == pr0)))
        hit[0] = False
        done, reason = False, ""
        collected = state.collected
        for s in np.flatnonzero(hit):
            if s in respawn:
                continue
            if kind[s] in ("enemy", "missile"):
                done, reason = True, "collision"
            elif kind[s] == "diver" and collected < CAPACITY:
                collected += 1
                respawn.append(s)
        for s in self._movers():
            if col[s] < 0 or col[s] >= cfg.n_cols:
                respawn.append(s)
        for s in sorted(set(int(s) for s in respawn)):
            col[s], row[s], heading[s] = self._spawn(step_rng(state.seed, state.t + 1, s), pc, pr)
        oxygen = state.oxygen
        if pr == 0:
            delta += DIVER_REWARD * collected
            collected = 0
            oxygen = 1.0
        else:
            oxygen = max(0.0, round(oxygen - cfg.oxygen_decay, 12))
            if oxygen <= 0 and not done:
                done, reason = True, "oxygen"
        orient = np.where(np.arange(len(orient)) == 0, orient, np.where(heading > 0, 1, 0))
        present = state.present.copy()
        present[kind == "collected_diver"] = np.arange(CAPACITY) < collected
        present[kind == "player_missile"] = shot is not None
        new = state.evolve(col=col, row=row, heading=heading, orient=orient, present=present,
                           oxygen=oxygen, collected=collected, done=done, reason=reason, shot=shot)
        return finish(self, state, new, delta)

    def observe(self, state: GameState) -> LogicState:
        inv = self.inventory
        kind = self.kind()
        n = inv.max_count
        f = np.zeros((n, 7))
        f[:, 0] = state.present
        f[:, 1] = CELL * state.col
        f[:, 2] = TOP + CELL * state.row
        f[:, 3] = CELL
        f[:, 4] = CELL
        f[:, 5] = state.orient
        f[:, 6] = [inv.type_id(t) for t in kind]
        for s in np.flatnonzero(kind == "oxygen_bar"):
            f[s, 1:5] = (0, 4, self.cfg.frame[1] * state.oxygen, 3)
        for i, s in enumerate(np.flatnonzero(kind == "collected_diver")):
            f[s, 1:5] = (42 + 6 * i, 8, 4, 4)
        for s in np.flatnonzero(kind == "player_missile"):
            if state.shot is not None:
                f[s, 1:3] = (CELL * state.shot[0], TOP + CELL * state.shot[1])
        f[~state.present, 1:6] = 0
        return LogicState("seaquest", f)
