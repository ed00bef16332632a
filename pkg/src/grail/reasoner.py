"""Differentiable weighted forward chaining over ground clauses.

Each ground clause contributes ``w[slot] * prod(body)`` to its head atom.  Head
values are merged with a smooth max (``gamma * logsumexp(x / gamma)``, clamped
at 1) for ``t_max`` steps; the action score is the max over the action's head
atoms and the policy is a softmax over action scores.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .grounding import AtomIndex, GroundClause, ground_clauses
from .logic import RuleBase, action_of, pretty_print

SOFTOR_MODES = {"lse": _kernels.LSE, "sum": _kernels.SUM}


class EmptyGraphError(ValueError):
    """The rule base grounds to no clause over the inventory."""


class WeightFileError(ValueError):
    pass


@dataclass(frozen=True)
class ReasonerConfig:
    t_max: int = 2
    gamma: float = 0.01
    policy_temperature: float = 1.0
    softor: str = "lse"

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.gamma <= 0 or self.policy_temperature <= 0:
            raise ValueError("gamma and policy_temperature must be positive")
        if self.softor not in SOFTOR_MODES:
            raise ValueError(f"softor must be one of {sorted(SOFTOR_MODES)}")


@dataclass(frozen=True, eq=False)
class InferenceGraph:
    """Compiled ground program: padded index arrays consumed by the kernels."""

    index: AtomIndex
    actions: tuple[str, ...]
    n_weights: int
    clauses: tuple[GroundClause, ...] = field(repr=False)
    body: np.ndarray = field(repr=False)          # (G, L) atom ids, -1 pad
    wslot: np.ndarray = field(repr=False)         # (G,)
    head_atoms: np.ndarray = field(repr=False)    # (H,) atom ids of heads
    head_action: np.ndarray = field(repr=False)   # (H,) action index
    head_clauses: np.ndarray = field(repr=False)  # (H, K) clause ids, -1 pad
    head_of: np.ndarray = field(repr=False)       # (G,) head position
    head_slot: np.ndarray = field(repr=False)     # (G,) column in head_clauses

    @property
    def n_ground(self) -> int:
        return len(self.clauses)


def compile_graph(rb: RuleBase, idx: AtomIndex, actions: tuple[str, ...] | None = None) -> InferenceGraph:
    """Ground ``rb`` against the atom index.  Raises :class:`EmptyGraphError`
    when no clause has a ground instance."""
    actions = tuple(actions) if actions is not None else rb.actions
    head_names = [a.predicate for a in idx.head_atoms]
    missing = {action_of(h) for h in head_names} - set(actions)
    if missing:
        raise ValueError(f"actions {sorted(missing)} are not in the action vocabulary")
    head_pos = {name: j for j, name in enumerate(head_names)}
    clauses = []
    for cid, clause, binding, body in ground_clauses(rb, idx.inventory):
        j = head_pos[clause.head.predicate.name]
        clauses.append(GroundClause(
            cid, clause.weight_slot, j,
            tuple(idx.lookup[a] for a in body),
            tuple(sorted((v.name, s) for v, s in binding.items())),
        ))
    if not clauses:
        raise EmptyGraphError("rule base has no ground instance over this inventory")
    G = len(clauses)
    L = max(len(c.body) for c in clauses)
    body = np.full((G, L), -1, dtype=np.int64)
    for g, c in enumerate(clauses):
        body[g, :len(c.body)] = c.body
    H = len(head_names)
    per_head: list[list[int]] = [[] for _ in range(H)]
    head_slot = np.empty(G, dtype=np.int64)
    for g, c in enumerate(clauses):
        head_slot[g] = len(per_head[c.head])
        per_head[c.head].append(g)
    K = max(1, max(len(p) for p in per_head))
    head_clauses = np.full((H, K), -1, dtype=np.int64)
    for j, p in enumerate(per_head):
        head_clauses[j, :len(p)] = p
    return InferenceGraph(
        index=idx,
        actions=actions,
        n_weights=len(rb.clauses),
        clauses=tuple(clauses),
        body=body,
        wslot=np.array([c.weight_slot for c in clauses], dtype=np.int64),
        head_atoms=np.arange(idx.n_body, len(idx), dtype=np.int64),
        head_action=np.array([actions.index(action_of(h)) for h in head_names], dtype=np.int64),
        head_clauses=head_clauses,
        head_of=np.array([c.head for c in clauses], dtype=np.int64),
        head_slot=head_slot,
    )


# --------------------------------------------------------------------------- primitives

def softor(values, gamma: float = 0.01) -> float:
    """Smooth max ``gamma * log(sum(exp(x / gamma)))`` clamped to 1."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return 0.0
    m = x.max()
    return float(min(1.0, m + gamma * np.log(np.exp((x - m) / gamma).sum())))


def _as_batch(V):
    V = np.asarray(V, dtype=float)
    return (V[None], True) if V.ndim == 1 else (V, False)


@dataclass
class ChainTrace:
    """Intermediates of one forward pass, kept for the backward pass."""

    P: np.ndarray
    hs: np.ndarray
    us: np.ndarray
    w: np.ndarray


def _forward(V, w, graph: InferenceGraph, cfg: ReasonerConfig, backend=None):
    body_products, chain_forward, _ = _kernels.kernels(backend)
    w = np.ascontiguousarray(w, dtype=float)
    if w.shape != (graph.n_weights,):
        raise ValueError(f"expected {graph.n_weights} weights, got shape {w.shape}")
    V = np.ascontiguousarray(V, dtype=float)
    P = body_products(V, graph.body)
    h0 = np.ascontiguousarray(V[:, graph.head_atoms])
    hs, us = chain_forward(P, h0, w, graph.wslot, graph.head_clauses,
                           cfg.t_max, cfg.gamma, SOFTOR_MODES[cfg.softor])
    return ChainTrace(P, hs, us, w)


def forward_chain(V, w, graph: InferenceGraph, cfg: ReasonerConfig = ReasonerConfig(), backend=None) -> np.ndarray:
    """Valuation after ``t_max`` steps; body atoms pass through unchanged."""
    Vb, single = _as_batch(V)
    tr = _forward(Vb, w, graph, cfg, backend)
    out = Vb.copy()
    out[:, graph.head_atoms] = tr.hs[:, -1]
    return out[0] if single else out


def _reduce_actions(h, graph: InferenceGraph):
    """Per-action max over head atoms; returns scores and the arg-max head
    (-1 when an action has no head atom)."""
    B = h.shape[0]
    n_act = len(graph.actions)
    scores = np.zeros((B, n_act))
    arg = np.full((B, n_act), -1, dtype=np.int64)
    for c in range(n_act):
        js = np.flatnonzero(graph.head_action == c)
        if js.size:
            k = np.argmax(h[:, js], axis=1)
            arg[:, c] = js[k]
            scores[:, c] = h[np.arange(B), js[k]]
    return scores, arg


def scores_from_valuation(vT, graph: InferenceGraph) -> np.ndarray:
    """Action scores from an already-chained valuation: hard max over each
    action's head atoms (0 for an action without heads)."""
    Vb, single = _as_batch(vT)
    s, _ = _reduce_actions(Vb[:, graph.head_atoms], graph)
    return s[0] if single else s


def action_scores(V, w, graph: InferenceGraph, cfg: ReasonerConfig = ReasonerConfig(), backend=None) -> np.ndarray:
    Vb, single = _as_batch(V)
    tr = _forward(Vb, w, graph, cfg, backend)
    s, _ = _reduce_actions(tr.hs[:, -1], graph)
    return s[0] if single else s


def _softmax(s, tau):
    z = s / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def policy_from_scores(s, cfg: ReasonerConfig = ReasonerConfig()) -> np.ndarray:
    """``softmax(s / policy_temperature)`` over the last axis."""
    s = np.asarray(s, dtype=float)
    return _softmax(np.atleast_2d(s), cfg.policy_temperature).reshape(s.shape)


def policy_distribution(V, w, graph: InferenceGraph, cfg: ReasonerConfig = ReasonerConfig(), backend=None) -> np.ndarray:
    return policy_from_scores(action_scores(V, w, graph, cfg, backend), cfg)


def greedy_actions(V, w, graph: InferenceGraph, cfg: ReasonerConfig = ReasonerConfig(), backend=None) -> np.ndarray:
    """Arg-max action index per row; ties go to the lowest index."""
    return np.argmax(np.atleast_2d(action_scores(V, w, graph, cfg, backend)), axis=1)


def loss_and_grad(V, actions, w, graph: InferenceGraph, cfg: ReasonerConfig = ReasonerConfig(),
                  backend=None, need_grad: bool = True):
    """Mean cross-entropy of the policy against expert action indices, and
    its analytic gradient with respect to ``w``."""
    Vb, _ = _as_batch(V)
    a = np.asarray(actions, dtype=np.int64).reshape(-1)
    if a.shape[0] != Vb.shape[0]:
        raise ValueError("one action per valuation row is required")
    tr = _forward(Vb, w, graph, cfg, backend)
    s, arg = _reduce_actions(tr.hs[:, -1], graph)
    B = s.shape[0]
    pi = _softmax(s, cfg.policy_temperature)
    loss = float(-np.mean(np.log(np.maximum(pi[np.arange(B), a], 1e-300))))
    if not need_grad:
        return loss, None
    ds = pi.copy()
    ds[np.arange(B), a] -= 1.0
    ds /= cfg.policy_temperature * B
    gh = np.zeros((B, len(graph.head_atoms)))
    rows, cols = np.nonzero(arg >= 0)
    np.add.at(gh, (rows, arg[rows, cols]), ds[rows, cols])
    _, _, chain_backward = _kernels.kernels(backend)
    grad = chain_backward(tr.P, tr.hs, tr.us, tr.w, graph.wslot, graph.head_clauses,
                          graph.head_of, graph.head_slot, cfg.gamma,
                          SOFTOR_MODES[cfg.softor], gh, graph.n_weights)
    return loss, grad


# --------------------------------------------------------------------------- weight files

WEIGHTS_MAGIC = "# grail-weights v1"


def rules_digest(rb: RuleBase) -> str:
    return hashlib.sha256(pretty_print(rb).encode()).hexdigest()


def save_weights(path, w, rb: RuleBase, cfg: ReasonerConfig = ReasonerConfig(), extra=None) -> None:
    """Write the weight file.  ``extra`` maps further header keys to
    single-line string values."""
    w = np.asarray(w, dtype=float)
    if w.shape != (len(rb.clauses),):
        raise WeightFileError(f"{w.size} weights for {len(rb.clauses)} clauses")
    lines = [
        WEIGHTS_MAGIC,
        f"rules_sha256: {rules_digest(rb)}",
        f"clauses: {len(rb.clauses)}",
        f"t_max: {cfg.t_max}",
        f"gamma: {cfg.gamma!r}",
        f"policy_temperature: {cfg.policy_temperature!r}",
        f"softor: {cfg.softor}",
    ]
    for key, val in (extra or {}).items():
        if "\n" in str(val) or "\t" in str(val):
            raise WeightFileError(f"header value for {key} must be a single line")
        lines.append(f"{key}: {val}")
    for c in sorted(rb.clauses, key=lambda c: c.weight_slot):
        lines.append(f"{float(w[c.weight_slot])!r}\t{c}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_weights(path, rb: RuleBase | None = None):
    """Read a weight file.  Returns ``(weights, config, header, clause_texts)``.
    With ``rb`` given, the stored rule digest must match."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != WEIGHTS_MAGIC:
        raise WeightFileError(f"{path}: not a grail weight file")
    header, i = {}, 1
    while i < len(lines) and ":" in lines[i] and "\t" not in lines[i]:
        key, val = lines[i].split(":", 1)
        header[key.strip()] = val.strip()
        i += 1
    try:
        n = int(header["clauses"])
        cfg = ReasonerConfig(int(header["t_max"]), float(header["gamma"]),
                             float(header["policy_temperature"]), header["softor"])
    except (KeyError, ValueError) as exc:
        raise WeightFileError(f"{path}: bad header ({exc})") from None
    body = [ln for ln in lines[i:] if ln.strip()]
    if len(body) != n:
        raise WeightFileError(f"{path}: header says {n} clauses, found {len(body)}")
    weights, texts = [], []
    for ln in body:
        val, _, text = ln.partition("\t")
        try:
            weights.append(float(val))
        except ValueError:
            raise WeightFileError(f"{path}: bad weight {val!r}") from None
        texts.append(text)
    if rb is not None:
        if header.get("rules_sha256") != rules_digest(rb):
            raise WeightFileError(f"{path}: weights were trained on a different rule base")
    return np.array(weights), cfg, header, texts


def primary_condition(text: str) -> str:
    """First body atom of a clause string, as shown by ``inspect``."""
    body = text.split(":-", 1)[1].strip().rstrip(".")
    depth, out = 0, []
    for ch in body:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            break
        out.append(ch)
    return "".join(out).strip()


def rank_rules(w, texts) -> list[tuple[str, str, float]]:
    """``(head, primary condition, weight)`` sorted by descending weight."""
    rows = [(t.split(":-", 1)[0].strip(), primary_condition(t), float(x)) for t, x in zip(texts, w)]
    return sorted(rows, key=lambda r: -r[2])


__all__ = [
    "ReasonerConfig", "InferenceGraph", "EmptyGraphError", "WeightFileError", "compile_graph",
    "softor", "forward_chain", "action_scores", "scores_from_valuation", "policy_from_scores", "policy_distribution", "greedy_actions",
    "loss_and_grad", "save_weights", "load_weights", "rules_digest", "rank_rules",
    "primary_condition",
]
