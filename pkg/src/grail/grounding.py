"""Grounding object-centric logic states into fuzzy atom valuations.

A :class:`LogicState` is one frame of object slots in the per-game feature
layout.  :func:`build_atom_index` enumerates the ground atoms a rule base can
touch over an :class:`ObjectInventory`; :func:`ground_valuation` evaluates
them with soft predicates and :func:`oracle_valuation` with their crisp
limits.  :func:`calibrate_predicates` fits the soft-predicate thresholds and
temperatures to crisp labels by Bernoulli negative log-likelihood.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import expit

from . import predicates as P
from .logic import ANY_SORT, TYPE_SORT, Clause, Constant, RuleBase, Variable
from .optim import AdamState, adam_step

EPS = 1e-7

LAYOUTS = {
    "asterix": ("is_present", "type", "x", "y"),
    "seaquest": ("is_present", "x", "y", "width", "height", "orientation", "type"),
}
ASTERIX_BOX = 8.0  # px window around (x, y) when the layout carries no extent

FACING_LEFT, FACING_RIGHT = 0, 1


class LayoutError(ValueError):
    pass


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ObjectInventory:
    """Fixed ordered object slots of one environment configuration."""

    env_name: str
    slots: tuple[tuple[int, str], ...]
    type_labels: tuple[str, ...]
    frame: tuple[int, int] = (84, 84)       # (H, W) in pixels
    lane_height: float = 7.0
    lane_offset: float = 14.0
    divers_capacity: int = 6

    def __post_init__(self):
        ids = [s for s, _ in self.slots]
        if ids != list(range(len(ids))):
            raise ValueError("slot ids must be 0..n-1 in order")
        for _, t in self.slots:
            if t not in self.type_labels:
                raise ValueError(f"slot type {t!r} not in {self.type_labels}")

    @property
    def layout(self) -> str:
        return P.env_family(self.env_name)

    @property
    def max_count(self) -> int:
        return len(self.slots)

    def type_id(self, label: str) -> int:
        return self.type_labels.index(label)

    def slots_of(self, label: str) -> tuple[int, ...]:
        return tuple(s for s, t in self.slots if t == label)

    def slot_type(self, slot: int) -> str:
        return self.slots[slot][1]

    def player_slot(self) -> int:
        return self.slots_of("player")[0]


@dataclass(frozen=True, eq=False)
class LogicState:
    """One frame: an ``(n_slots, n_features)`` array in the game's layout."""

    layout: str
    features: np.ndarray

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise LayoutError(f"unknown layout {self.layout!r}")
        f = np.asarray(self.features, dtype=float)
        if f.ndim != 2 or f.shape[1] != len(LAYOUTS[self.layout]):
            raise LayoutError(f"{self.layout} states need shape (n, {len(LAYOUTS[self.layout])}), got {f.shape}")
        f.setflags(write=False)
        object.__setattr__(self, "features", f)

    def column(self, name: str) -> np.ndarray:
        return self.features[:, LAYOUTS[self.layout].index(name)]

    @property
    def present(self):
        return self.column("is_present")

    @property
    def type_id(self):
        return self.column("type").astype(int)

    def __eq__(self, other):
        return (isinstance(other, LogicState) and self.layout == other.layout
                and np.array_equal(self.features, other.features))

    def __hash__(self):
        return hash((self.layout, self.features.tobytes()))


def centers(features: np.ndarray, layout: str) -> tuple[np.ndarray, np.ndarray]:
    """Pixel centers from stacked features ``(..., n_slots, n_features)``."""
    cols = LAYOUTS[layout]
    x = features[..., cols.index("x")]
    y = features[..., cols.index("y")]
    if layout == "seaquest":
        return x + features[..., cols.index("width")] / 2, y + features[..., cols.index("height")] / 2
    return x, y


def bounding_boxes(state: LogicState, box_size: float = ASTERIX_BOX) -> list[tuple[float, float, float, float] | None]:
    """Per-slot pixel boxes ``(x_min, y_min, x_max, y_max)``; ``None`` for absent slots."""
    f = state.features
    boxes = []
    for row in f:
        rec = dict(zip(LAYOUTS[state.layout], row))
        if not rec["is_present"]:
            boxes.append(None)
        elif state.layout == "seaquest":
            boxes.append((rec["x"], rec["y"], rec["x"] + rec["width"], rec["y"] + rec["height"]))
        else:
            h = box_size / 2
            boxes.append((rec["x"] - h, rec["y"] - h, rec["x"] + h, rec["y"] + h))
    return boxes


def check_state(state: LogicState, inv: ObjectInventory) -> None:
    if state.layout != inv.layout:
        raise LayoutError(f"state layout {state.layout} does not match inventory {inv.layout}")
    if state.features.shape[0] != inv.max_count:
        raise LayoutError(f"state has {state.features.shape[0]} slots, inventory {inv.max_count}")
    x, y = centers(state.features, state.layout)
    H, W = inv.frame
    live = state.present > 0
    if np.any((x[live] < 0) | (x[live] > W) | (y[live] < 0) | (y[live] > H)):
        raise LayoutError("object coordinates outside the frame")


# --------------------------------------------------------------------------- parameters

DEFAULT_TEMPERATURE = 0.02
DEFAULT_THRESHOLDS = {"closeby": 0.15, "row": 0.04, "edge": 0.5, "oxygen": 0.3, "water": 0.25}


@dataclass(frozen=True)
class SoftPredicateParams:
    """Per-family thresholds (normalized units) and temperatures."""

    threshold: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    temperature: Mapping[str, float] = field(
        default_factory=lambda: {f: DEFAULT_TEMPERATURE for f in P.FAMILIES})

    def __post_init__(self):
        for f, t in self.temperature.items():
            if not t > 0:
                raise ValueError(f"temperature for {f} must be positive, got {t}")
        for f, th in self.threshold.items():
            if not 0 < th < 1:
                raise ValueError(f"threshold for {f} must lie in (0, 1), got {th}")

    def th(self, family: str) -> float:
        return self.threshold[family] if P.FAMILIES[family] else 0.0

    def with_temperature(self, tau: float) -> "SoftPredicateParams":
        return SoftPredicateParams(dict(self.threshold), {f: tau for f in self.temperature})

    def to_dict(self) -> dict:
        return {"threshold": dict(self.threshold), "temperature": dict(self.temperature)}


# --------------------------------------------------------------------------- atom index

@dataclass(frozen=True, order=True)
class GroundAtom:
    predicate: str
    args: tuple

    def __str__(self):
        return f"{self.predicate}({','.join(str(a) for a in self.args)})"


def _sort_key(atom: GroundAtom):
    return (atom.predicate, tuple((0, a, "") if isinstance(a, int) else (1, 0, a) for a in atom.args))


@dataclass(frozen=True)
class GroundClause:
    clause_id: int
    weight_slot: int
    head: int
    body: tuple[int, ...]
    substitution: tuple[tuple[str, int], ...]


@dataclass(frozen=True, eq=False)
class AtomIndex:
    """Canonical ordering of ground atoms: body atoms sorted by predicate and
    arguments, then one head atom per action-head predicate."""

    atoms: tuple[GroundAtom, ...]
    n_body: int
    inventory: ObjectInventory
    lookup: Mapping[GroundAtom, int] = field(repr=False)
    entity_refs: tuple[tuple[int, ...], ...] = field(repr=False)

    def __len__(self):
        return len(self.atoms)

    def index(self, atom: GroundAtom | str) -> int:
        if isinstance(atom, str):
            for i, a in enumerate(self.atoms):
                if str(a) == atom:
                    return i
            raise KeyError(atom)
        return self.lookup[atom]

    @property
    def head_atoms(self) -> tuple[GroundAtom, ...]:
        return self.atoms[self.n_body:]


def _variable_domains(clause: Clause, inv: ObjectInventory) -> dict[Variable, tuple[int, ...]] | None:
    all_slots = tuple(range(inv.max_count))
    domains: dict[Variable, set[int]] = {}
    for atom in clause.body:
        for pos, (term, sort) in enumerate(zip(atom.args, atom.predicate.arg_sorts)):
            if not isinstance(term, Variable):
                continue
            if sort == TYPE_SORT:
                return None  # types must be constants
            allowed = set(all_slots) if sort == ANY_SORT else set(inv.slots_of(sort))
            domains[term] = domains.get(term, set(all_slots)) & allowed
        if atom.predicate.name == "type" and isinstance(atom.args[0], Variable):
            label = atom.args[1]
            allowed = set(inv.slots_of(label.name)) if isinstance(label, Constant) else set()
            domains[atom.args[0]] &= allowed
    return {v: tuple(sorted(d)) for v, d in domains.items()}


def _ground_term(term, binding):
    return binding[term] if isinstance(term, Variable) else term.name


def enumerate_substitutions(clause: Clause, inv: ObjectInventory):
    """Yield injective, type-consistent substitutions of a clause's body variables."""
    domains = _variable_domains(clause, inv)
    if domains is None:
        return
    variables = list(clause.body_variables())
    for combo in itertools.product(*(domains[v] for v in variables)):
        if len(set(combo)) != len(combo):
            continue
        yield dict(zip(variables, combo))


def _ground_head(clause: Clause) -> GroundAtom:
    return GroundAtom(clause.head.predicate.name,
                      tuple("player" if isinstance(t, Variable) else t.name for t in clause.head.args))


def _groundable(atom: GroundAtom, inv: ObjectInventory) -> bool:
    if atom.predicate == "type":
        return atom.args[1] in inv.type_labels
    return all(isinstance(a, int) for a in atom.args)


def ground_clauses(rb: RuleBase, inv: ObjectInventory):
    """Yield ``(clause_id, clause, substitution, ground_body)`` in deterministic order."""
    for cid, clause in enumerate(rb.clauses):
        for binding in enumerate_substitutions(clause, inv):
            body = tuple(GroundAtom(a.predicate.name, tuple(_ground_term(t, binding) for t in a.args))
                         for a in clause.body)
            if all(_groundable(g, inv) for g in body):
                yield cid, clause, binding, body


def build_atom_index(rb: RuleBase, inv: ObjectInventory) -> AtomIndex:
    if inv.max_count == 0:
        raise ValueError("empty inventory")
    body_atoms: set[GroundAtom] = set()
    for _, _, _, body in ground_clauses(rb, inv):
        body_atoms.update(body)
    ordered = sorted(body_atoms, key=_sort_key)
    heads = [GroundAtom(h, ("player",) * rb.signature(h).arity) for h in rb.action_heads]
    atoms = tuple(ordered + heads)
    refs = tuple(tuple(a for a in atom.args if isinstance(a, int)) for atom in ordered) + ((),) * len(heads)
    return AtomIndex(atoms, len(ordered), inv, {a: i for i, a in enumerate(atoms)}, refs)


# --------------------------------------------------------------------------- evaluation

@dataclass(frozen=True, eq=False)
class _Plan:
    """Per-atom evaluation arrays, grouped by statistic / crisp test."""

    soft: dict          # stat -> (atom_ids, a0, a1, family_names, signs)
    crisp: dict         # test -> (atom_ids, a0, extra)
    refs: np.ndarray    # (n_body, 2) slot refs, -1 padded
    families: tuple[str, ...]


def _plan(idx: AtomIndex) -> _Plan:
    cached = idx.__dict__.get("_plan")
    if cached is not None:
        return cached
    soft: dict[str, list] = {}
    crisp: dict[str, list] = {}
    refs = -np.ones((idx.n_body, 2), dtype=np.int64)
    for i, atom in enumerate(idx.atoms[:idx.n_body]):
        slots = [a for a in atom.args if isinstance(a, int)]
        refs[i, :len(slots)] = slots
        spec = P.spec_of(atom.predicate)
        a0 = slots[0]
        a1 = slots[1] if len(slots) > 1 else -1
        if isinstance(spec, P.SoftSpec):
            soft.setdefault(spec.stat, []).append((i, a0, a1, spec.family, spec.sign))
        else:
            extra = idx.inventory.type_id(atom.args[1]) if spec.test == "type" else -1
            crisp.setdefault(spec.test, []).append((i, a0, extra))
    soft_arr = {k: (np.array([r[0] for r in v]), np.array([r[1] for r in v]), np.array([r[2] for r in v]),
                    tuple(r[3] for r in v), np.array([r[4] for r in v], dtype=float))
                for k, v in soft.items()}
    crisp_arr = {k: tuple(np.array(col) for col in zip(*v)) for k, v in crisp.items()}
    families = tuple(sorted({f for v in soft_arr.values() for f in v[3]}))
    plan = _Plan(soft_arr, crisp_arr, refs, families)
    object.__setattr__(idx, "_plan", plan)
    return plan


def _stack(states: Sequence[LogicState], inv: ObjectInventory) -> np.ndarray:
    for s in states:
        check_state(s, inv)
    if not states:
        return np.zeros((0, inv.max_count, len(LAYOUTS[inv.layout])))
    return np.stack([s.features for s in states])


def _statistics(F: np.ndarray, idx: AtomIndex, plan: _Plan):
    """Return ``{stat: q}`` arrays of shape (N, n_atoms_with_stat)."""
    inv = idx.inventory
    H, W = inv.frame
    layout = inv.layout
    cx, cy = centers(F, layout)
    x, y = cx / W, cy / H
    pres = F[..., LAYOUTS[layout].index("is_present")] > 0
    out = {}
    for stat, (ids, a0, a1, fams, signs) in plan.soft.items():
        if stat == "dist":
            q = np.hypot(x[:, a0] - x[:, a1], y[:, a0] - y[:, a1])
        elif stat == "absdy":
            q = np.abs(y[:, a0] - y[:, a1])
        elif stat == "dy21":
            q = y[:, a1] - y[:, a0]
        elif stat == "dy12":
            q = y[:, a0] - y[:, a1]
        elif stat == "dx12":
            q = x[:, a0] - x[:, a1]
        elif stat == "dx21":
            q = x[:, a1] - x[:, a0]
        elif stat == "y":
            q = y[:, a0]
        elif stat == "oxygen":
            width = F[..., LAYOUTS[layout].index("width")] if layout == "seaquest" else np.zeros_like(x)
            q = width[:, a0] / W
        elif stat == "closest":
            q = _closest_gap(x, y, pres, F[..., LAYOUTS[layout].index("type")].astype(int), a0, a1)
        else:  # pragma: no cover - guarded by the predicate table
            raise KeyError(stat)
        out[stat] = q
    return out


def _closest_gap(x, y, pres, typ, a0, a1):
    """d(o1,o2) minus the distance from o1 to the nearest other present
    object sharing o2's type (``-inf`` when there is none)."""
    n_slots = x.shape[1]
    dx = x[:, a0, None] - x[:, None, :]
    dy = y[:, a0, None] - y[:, None, :]
    dist = np.hypot(dx, dy)                                  # (N, A, S)
    same = typ[:, None, :] == typ[:, a1][:, :, None]
    slots = np.arange(n_slots)
    other = (slots[None, :] != a0[:, None]) & (slots[None, :] != a1[:, None])
    mask = same & pres[:, None, :] & other[None]
    min_other = np.where(mask, dist, np.inf).min(axis=2)
    d = np.hypot(x[:, a0] - x[:, a1], y[:, a0] - y[:, a1])
    return d - min_other


def _presence(F, idx, plan):
    pres = (F[..., LAYOUTS[idx.inventory.layout].index("is_present")] > 0).astype(float)
    r = plan.refs
    p0 = np.where(r[:, 0] >= 0, pres[:, np.maximum(r[:, 0], 0)], 1.0)
    p1 = np.where(r[:, 1] >= 0, pres[:, np.maximum(r[:, 1], 0)], 1.0)
    return p0 * p1


def _crisp_values(F, idx, plan, out):
    inv = idx.inventory
    cols = LAYOUTS[inv.layout]
    pres = F[..., cols.index("is_present")] > 0
    typ = F[..., cols.index("type")].astype(int)
    _, cy = centers(F, inv.layout)
    lane = np.floor((cy - inv.lane_offset) / inv.lane_height).astype(int)
    for test, (ids, a0, extra) in plan.crisp.items():
        if test == "type":
            val = typ[:, a0] == extra
        elif test == "present":
            val = pres[:, a0]
        elif test == "odd":
            val = lane[:, a0] % 2 == 1
        elif test == "even":
            val = lane[:, a0] % 2 == 0
        elif test in ("facing_left", "facing_right"):
            orient = F[..., cols.index("orientation")]
            val = orient[:, a0] == (FACING_LEFT if test == "facing_left" else FACING_RIGHT)
        elif test == "divers_full":
            collected = inv.slots_of("collected_diver") if "collected_diver" in inv.type_labels else ()
            count = pres[:, list(collected)].sum(axis=1) if collected else np.zeros(len(F))
            val = np.repeat((count >= inv.divers_capacity)[:, None], len(ids), axis=1)
        else:  # pragma: no cover
            raise KeyError(test)
        out[:, ids] = val


def _soft_z(q_by_stat, plan, params: SoftPredicateParams):
    """Logits ``z = sign * (th - q) / tau`` for each soft atom group."""
    zs = {}
    for stat, (ids, a0, a1, fams, signs) in plan.soft.items():
        th = np.array([params.th(f) for f in fams])
        tau = np.array([params.temperature[f] for f in fams])
        q = q_by_stat[stat]
        with np.errstate(invalid="ignore"):
            z = signs * (th - q) / tau
        zs[stat] = np.nan_to_num(z, nan=0.0, posinf=np.inf, neginf=-np.inf)
    return zs


def ground_batch(states: Sequence[LogicState], params: SoftPredicateParams, idx: AtomIndex) -> np.ndarray:
    """Soft valuations for a batch of states, shape ``(N, |P|)``; head atoms are 0."""
    F = _stack(states, idx.inventory)
    plan = _plan(idx)
    out = np.zeros((len(F), len(idx)))
    body = out[:, :idx.n_body]
    for stat, z in _soft_z(_statistics(F, idx, plan), plan, params).items():
        body[:, plan.soft[stat][0]] = expit(z)
    _crisp_values(F, idx, plan, body)
    body *= _presence(F, idx, plan)
    return out


def oracle_batch(states: Sequence[LogicState], idx: AtomIndex, params: SoftPredicateParams | None = None) -> np.ndarray:
    """Crisp {0,1} valuations: the zero-temperature limit of :func:`ground_batch`."""
    params = params or SoftPredicateParams()
    F = _stack(states, idx.inventory)
    plan = _plan(idx)
    out = np.zeros((len(F), len(idx)))
    body = out[:, :idx.n_body]
    for stat, z in _soft_z(_statistics(F, idx, plan), plan, params).items():
        body[:, plan.soft[stat][0]] = z > 0
    _crisp_values(F, idx, plan, body)
    body *= _presence(F, idx, plan)
    return out


def ground_valuation(state: LogicState, params: SoftPredicateParams, idx: AtomIndex) -> np.ndarray:
    return ground_batch([state], params, idx)[0]


def oracle_valuation(state: LogicState, idx: AtomIndex, params: SoftPredicateParams | None = None) -> np.ndarray:
    return oracle_batch([state], idx, params)[0]


# --------------------------------------------------------------------------- calibration

def nll(v: np.ndarray, y: np.ndarray) -> float:
    """Mean Bernoulli negative log-likelihood with clamping to [EPS, 1-EPS]."""
    v = np.clip(v, EPS, 1 - EPS)
    return float(-np.mean(y * np.log(v) + (1 - y) * np.log1p(-v)))


@dataclass
class CalibrationResult:
    params: SoftPredicateParams
    losses: list[float]


def calibrate_predicates(
    dataset: Iterable[tuple[LogicState, np.ndarray]],
    params0: SoftPredicateParams,
    idx: AtomIndex,
    steps: int = 300,
    lr: float = 0.02,
    tol: float = 1e-10,
) -> CalibrationResult:
    """Fit thresholds and (log) temperatures of the soft families used by ``idx``
    by full-batch Adam on the mean Bernoulli NLL over body atoms."""
    pairs = list(dataset)
    if not pairs:
        raise ValueError("calibration needs a nonempty dataset")
    F = _stack([s for s, _ in pairs], idx.inventory)
    Y = np.stack([np.asarray(y, dtype=float)[:idx.n_body] for _, y in pairs])
    plan = _plan(idx)
    q_by_stat = _statistics(F, idx, plan)
    pres = _presence(F, idx, plan)
    crisp = np.zeros((len(F), idx.n_body))
    _crisp_values(F, idx, plan, crisp)
    crisp *= pres

    fams = plan.families
    thr_fams = [f for f in fams if P.FAMILIES[f]]
    n_thr = len(thr_fams)

    def unpack(theta):
        th = dict(params0.threshold)
        tau = dict(params0.temperature)
        for k, f in enumerate(thr_fams):
            th[f] = float(theta[k])
        for k, f in enumerate(fams):
            tau[f] = float(np.exp(theta[n_thr + k]))
        return th, tau

    def loss_grad(theta):
        th, tau = unpack(theta)
        V = crisp.copy()
        grad = np.zeros_like(theta)
        dz = {}
        for stat, (ids, a0, a1, fam, signs) in plan.soft.items():
            th_a = np.array([th[f] if P.FAMILIES[f] else 0.0 for f in fam])
            tau_a = np.array([tau[f] for f in fam])
            z = signs * (th_a - q_by_stat[stat]) / tau_a
            z = np.nan_to_num(z, nan=0.0)
            s = expit(z)
            V[:, ids] = s * pres[:, ids]
            dz[stat] = (z, s, th_a, tau_a, signs)
        Vc = np.clip(V, EPS, 1 - EPS)
        loss = float(-np.mean(Y * np.log(Vc) + (1 - Y) * np.log1p(-Vc)))
        inside = (V > EPS) & (V < 1 - EPS)
        dL_dV = np.where(inside, (-Y / Vc + (1 - Y) / (1 - Vc)), 0.0) / Y.size
        for stat, (ids, a0, a1, fam, signs) in plan.soft.items():
            z, s, th_a, tau_a, sg = dz[stat]
            g = dL_dV[:, ids] * pres[:, ids] * s * (1 - s)     # dL/dz
            g = np.where(np.isfinite(z), g, 0.0)
            for col, f in enumerate(fam):
                gz = g[:, col]
                if P.FAMILIES[f]:
                    grad[thr_fams.index(f)] += np.sum(gz * sg[col] / tau_a[col])
                zc = np.where(np.isfinite(z[:, col]), z[:, col], 0.0)
                grad[n_thr + fams.index(f)] += np.sum(gz * -zc)
        return loss, grad

    theta = np.array([params0.threshold[f] for f in thr_fams]
                     + [np.log(params0.temperature[f]) for f in fams], dtype=float)
    state = AdamState.zeros(len(theta))
    losses = []
    best = (np.inf, theta.copy())
    for step in range(steps + 1):
        loss, grad = loss_grad(theta)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise CalibrationError(f"calibration diverged at step {step} (loss={loss})")
        losses.append(loss)
        if loss < best[0]:
            best = (loss, theta.copy())
        if step == steps or (step > 0 and abs(losses[-2] - loss) < tol):
            break
        theta, state = adam_step(theta, grad, state, lr, bounds=None)
        theta[:n_thr] = np.clip(theta[:n_thr], 1e-4, 1 - 1e-4)
    th, tau = unpack(best[1])
    return CalibrationResult(SoftPredicateParams(th, tau), losses)


def calibration_loss(pairs, params: SoftPredicateParams, idx: AtomIndex) -> float:
    V = ground_batch([s for s, _ in pairs], params, idx)[:, :idx.n_body]
    Y = np.stack([np.asarray(y, float)[:idx.n_body] for _, y in pairs])
    return nll(V, Y)
