"""Predicate library for the object-centric games.

Soft predicates are logistic surrogates ``sigmoid(sign * (threshold - q) / tau)``
over a geometric statistic ``q`` computed from normalized object centers.
Families group predicates that share one ``(threshold, tau)`` pair; families
without a threshold compare ``q`` against zero.  Crisp predicates read
discrete features (type, presence, lane parity, orientation, counters).
"""
from __future__ import annotations

from dataclasses import dataclass

from .logic import ANY_SORT, BODY_CRISP, BODY_SOFT, TYPE_SORT, PredicateSignature

# family -> has a calibratable threshold
FAMILIES = {
    "closeby": True,
    "row": True,
    "edge": True,
    "oxygen": True,
    "water": True,
    "side": False,
    "closest": False,
}


@dataclass(frozen=True)
class SoftSpec:
    family: str
    stat: str   # dist | absdy | dy21 | dy12 | dx12 | dx21 | y | oxygen | closest
    sign: int


@dataclass(frozen=True)
class CrispSpec:
    test: str   # type | present | odd | even | facing_left | facing_right | divers_full


def _soft(name, sorts, family, stat, sign):
    return PredicateSignature(name, len(sorts), tuple(sorts), BODY_SOFT), SoftSpec(family, stat, sign)


def _crisp(name, sorts, test):
    return PredicateSignature(name, len(sorts), tuple(sorts), BODY_CRISP), CrispSpec(test)


_O2 = (ANY_SORT, ANY_SORT)

_ASTERIX = [
    _soft("closeby", _O2, "closeby", "dist", +1),
    _soft("notcloseby", _O2, "closeby", "dist", -1),
    _soft("same_row", _O2, "row", "absdy", +1),
    _soft("above_row", _O2, "row", "dy21", -1),
    _soft("below_row", _O2, "row", "dy12", -1),
    _soft("on_right", _O2, "side", "dx12", -1),
    _soft("on_left", _O2, "side", "dx21", -1),
    _soft("at_top", (ANY_SORT,), "edge", "y", +1),
    _soft("at_bottom", (ANY_SORT,), "edge", "y", -1),
    _soft("closest", _O2, "closest", "closest", +1),
    _crisp("type", (ANY_SORT, TYPE_SORT), "type"),
    _crisp("visible", (ANY_SORT,), "present"),
    _crisp("on_odd", (ANY_SORT,), "odd"),
    _crisp("on_even", (ANY_SORT,), "even"),
]


def _relations(kind: str):
    pk = ("player", kind)
    return [
        _soft(f"close_by_{kind}", pk, "closeby", "dist", +1),
        _soft(f"not_close_by_{kind}", pk, "closeby", "dist", -1),
        _soft(f"same_depth_{kind}", pk, "row", "absdy", +1),
        _soft(f"higher_than_{kind}", pk, "row", "dy21", -1),
        _soft(f"deeper_than_{kind}", pk, "row", "dy12", -1),
        _soft(f"right_of_{kind}", pk, "side", "dx12", -1),
        _soft(f"left_of_{kind}", pk, "side", "dx21", -1),
        _crisp(f"visible_{kind}", (kind,), "present"),
    ]


_SEAQUEST = [
    *_relations("enemy"),
    *_relations("diver"),
    *_relations("missile"),
    _soft("oxygen_low", ("oxygen_bar",), "oxygen", "oxygen", +1),
    _soft("above_water", ("player",), "water", "y", +1),
    _soft("below_water", ("player",), "water", "y", -1),
    _crisp("facing_left", ("player",), "facing_left"),
    _crisp("facing_right", ("player",), "facing_right"),
    _crisp("divers_collected_full", ("diver",), "divers_full"),
]

_LIBRARY = {"asterix": dict(_ASTERIX), "seaquest": dict(_SEAQUEST)}
_SPECS = {sig.name: spec for table in (_ASTERIX, _SEAQUEST) for sig, spec in table}


def signatures(env: str) -> frozenset[PredicateSignature]:
    """Body-predicate signatures available for an environment family."""
    return frozenset(_LIBRARY[env_family(env)])


def spec_of(name: str) -> SoftSpec | CrispSpec:
    return _SPECS[name]


def env_family(env: str) -> str:
    base = env.split("-", 1)[0]
    if base == "freeway":
        return "asterix"  # same generic relational vocabulary
    if base not in _LIBRARY:
        raise KeyError(f"unknown environment {env!r}")
    return base
