"""Scripted experts that act by crisp evaluation of a rule base, and the
synthetic gaze they emit."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..grounding import AtomIndex, LogicState, build_atom_index, centers, oracle_batch
from ..logic import RuleBase
from ..reasoner import EmptyGraphError, InferenceGraph, compile_graph
from .core import EnvConfig, Game

SAFETY = ("dodge", "evade")
RESOURCE = ("air", "diver", "divers")
REWARD = ("bonus", "fire", "aim")


def rule_tier(head: str) -> int:
    """Arbitration tier of a head predicate: 0 safety, 1 resource, 2 reward,
    3 everything else.  ``noop_no_*`` / ``noop_far_*`` heads are idling rules."""
    words = head.split("_")
    if words[0] == "noop" and words[1:2] in (["no"], ["far"]):
        return 3
    for tier, keys in enumerate((SAFETY, RESOURCE, REWARD)):
        if any(w in keys for w in words):
            return tier
    return 3


@dataclass(frozen=True)
class Decision:
    action: str
    clause: int | None                 # fired clause id, None for the default noop
    attended: tuple[int, ...]          # slots the expert looked at
    fired: tuple[int, ...]             # every clause that fired, in priority order


class Expert:
    """Crisp evaluator of ``rb`` over a game's inventory.  Slots in
    ``ignore`` (decoys) are hidden from it."""

    def __init__(self, rb: RuleBase, game: Game):
        self.rb = rb
        self.game = game
        self.ignore = tuple(game.decoy_slots())
        self.idx: AtomIndex | None = None
        self.graph: InferenceGraph | None = None
        if len(rb):
            self.idx = build_atom_index(rb, game.inventory)
            try:
                self.graph = compile_graph(rb, self.idx, game.actions)
            except EmptyGraphError:
                self.graph = None
        heads = [c.head.predicate.name for c in rb.clauses]
        self.priority = sorted(range(len(rb.clauses)), key=lambda i: (rule_tier(heads[i]), i))

    def _mask(self, state: LogicState) -> LogicState:
        if not self.ignore:
            return state
        f = state.features.copy()
        f[list(self.ignore), 0] = 0
        return LogicState(state.layout, f)

    def decide(self, state: LogicState) -> Decision:
        player = self.game.inventory.player_slot()
        if self.graph is None:
            return Decision("noop", None, (player,), ())
        g = self.graph
        V = oracle_batch([self._mask(state)], self.idx)
        P = _kernels.body_products_np(V, g.body)[0]
        first: dict[int, int] = {}
        for k in np.flatnonzero(P > 0.5):
            first.setdefault(g.clauses[k].clause_id, int(k))
        fired = tuple(c for c in self.priority if c in first)
        if not fired:
            return Decision("noop", None, (player,), ())
        attended: list[int] = []
        for c in fired:
            for a in g.clauses[first[c]].body:
                for s in self.idx.entity_refs[a]:
                    if s not in attended:
                        attended.append(s)
        best = fired[0]
        return Decision(self.rb.clauses[best].action, best, tuple(attended), fired)


def scripted_expert(state: LogicState, expert: Expert) -> tuple[str, int | None]:
    d = expert.decide(state)
    return d.action, d.clause


def synth_gaze(state: LogicState, decision: Decision, cfg: EnvConfig, rng: np.random.Generator):
    """Fixations on the centers of the attended entities, plus, with
    probability ``cfg.p_noise``, one fixation on another present entity."""
    cx, cy = centers(state.features, state.layout)
    W, H = cfg.frame[1], cfg.frame[0]
    present = np.flatnonzero(state.present > 0)
    slots = [s for s in decision.attended if state.present[s] > 0]
    fx = [(float(cx[s]), float(cy[s])) for s in slots]
    others = [int(s) for s in present if s not in slots]
    if others and rng.random() < cfg.p_noise:
        s = others[int(rng.integers(len(others)))]
        fx.append((float(cx[s]), float(cy[s])))
    return tuple((min(max(x, 0.0), W - 1.0), min(max(y, 0.0), H - 1.0)) for x, y in fx)
