"""Gaze heatmaps, gaze mass over entity boxes and gaze-modulated valuations.

Heatmap cell ``(i, j)`` has its center at pixel ``(x=j, y=i)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .grounding import AtomIndex, LogicState, ObjectInventory, bounding_boxes, centers
from .optim import AdamState, adam_step

DEFAULT_DIMS = (84, 84)
DEFAULT_SIGMA = 2.0
KL_FLOOR = 1e-9

Box = tuple[float, float, float, float]


class GazeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GazeHeatmap:
    """Nonnegative ``H x W`` grid normalized to unit mass."""

    grid: np.ndarray

    def __post_init__(self):
        g = np.array(self.grid, dtype=float)
        if g.ndim != 2:
            raise GazeError(f"heatmap must be 2-D, got shape {g.shape}")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise GazeError("heatmap entries must be finite and nonnegative")
        total = g.sum()
        if total <= 0:
            raise GazeError("heatmap has zero mass")
        g /= total
        g.setflags(write=False)
        object.__setattr__(self, "grid", g)

    @property
    def dims(self) -> tuple[int, int]:
        return self.grid.shape

    @classmethod
    def uniform(cls, dims=DEFAULT_DIMS) -> "GazeHeatmap":
        return cls(np.ones(dims))


@dataclass(frozen=True)
class Fixation:
    x: float
    y: float
    weight: float = 1.0


def _gaussian(x: float, y: float, sigma: float, dims) -> np.ndarray:
    H, W = dims
    gx = np.exp(-((np.arange(W) - x) ** 2) / (2 * sigma ** 2))
    gy = np.exp(-((np.arange(H) - y) ** 2) / (2 * sigma ** 2))
    return np.outer(gy, gx)


def render_heatmap(fixations: Sequence, sigma: float = DEFAULT_SIGMA, dims=DEFAULT_DIMS) -> GazeHeatmap:
    """Sum of frame-truncated isotropic Gaussians, one unit of mass per fixation
    (times its duration weight).  No fixations gives the uniform map."""
    if sigma <= 0:
        raise GazeError("sigma must be positive")
    H, W = dims
    acc = np.zeros(dims)
    for f in fixations:
        f = f if isinstance(f, Fixation) else Fixation(*f)
        if not (0 <= f.x <= W - 1 and 0 <= f.y <= H - 1):
            raise GazeError(f"fixation {f} outside the {W}x{H} frame")
        g = _gaussian(f.x, f.y, sigma, dims)
        s = g.sum()
        if s > 0:
            acc += f.weight * g / s
    if acc.sum() <= 0:
        return GazeHeatmap.uniform(dims)
    return GazeHeatmap(acc)


def kl_divergence(G: GazeHeatmap, Ghat: GazeHeatmap, eps: float = KL_FLOOR) -> float:
    """``sum G log(G / Ghat)`` with ``Ghat`` floored at ``eps`` and renormalized."""
    if G.dims != Ghat.dims:
        raise GazeError(f"dimension mismatch {G.dims} vs {Ghat.dims}")
    q = np.maximum(Ghat.grid, eps)
    q = q / q.sum()
    p = G.grid
    nz = p > 0
    return float(max(np.sum(p[nz] * (np.log(p[nz]) - np.log(q[nz]))), 0.0))


def _box_cells(box: Box, dims) -> tuple[int, int, int, int]:
    H, W = dims
    x0, y0, x1, y1 = box
    if x0 > x1 or y0 > y1:
        raise GazeError(f"malformed box {box}")
    j0, j1 = max(int(np.ceil(x0)), 0), min(int(np.floor(x1)), W - 1)
    i0, i1 = max(int(np.ceil(y0)), 0), min(int(np.floor(y1)), H - 1)
    return i0, i1, j0, j1


def gaze_mass(Ghat: GazeHeatmap, box: Box) -> float:
    """Heatmap mass over cells whose centers lie inside ``box`` (inclusive)."""
    i0, i1, j0, j1 = _box_cells(box, Ghat.dims)
    if i0 > i1 or j0 > j1:
        return 0.0
    return float(np.clip(Ghat.grid[i0:i1 + 1, j0:j1 + 1].sum(), 0.0, 1.0))


def box_masses(Ghat: GazeHeatmap, boxes: Sequence[Box | None]) -> np.ndarray:
    """Gaze mass per box via a summed-area table; ``None`` boxes get 0."""
    sat = np.zeros((Ghat.dims[0] + 1, Ghat.dims[1] + 1))
    sat[1:, 1:] = Ghat.grid.cumsum(0).cumsum(1)
    out = np.zeros(len(boxes))
    for k, box in enumerate(boxes):
        if box is None:
            continue
        i0, i1, j0, j1 = _box_cells(box, Ghat.dims)
        if i0 > i1 or j0 > j1:
            continue
        out[k] = sat[i1 + 1, j1 + 1] - sat[i0, j1 + 1] - sat[i1 + 1, j0] + sat[i0, j0]
    return np.clip(out, 0.0, 1.0)


def aggregate_entity_scores(scores: Sequence[float]) -> float:
    """Product t-conorm ``1 - prod(1 - s)``; a single score is returned as is."""
    scores = list(scores)
    if not scores:
        raise GazeError("need at least one entity score")
    if len(scores) == 1:
        return float(scores[0])
    return float(1.0 - np.prod([1.0 - s for s in scores]))


def entity_scores(masses: np.ndarray, scale: str = "mass") -> np.ndarray:
    """Per-entity saliency from box masses.

    ``"mass"`` uses the raw mass; ``"peak"`` divides by the largest entity
    mass in the frame so the most-attended entity scores 1.
    """
    if scale == "mass":
        return masses
    if scale == "peak":
        top = masses.max(initial=0.0)
        return masses / top if top > 0 else masses
    raise ValueError(f"unknown gaze scale {scale!r}")


def atom_scores(slot_scores: np.ndarray, idx: AtomIndex) -> np.ndarray:
    """Aggregate per-slot scores onto atoms; atoms without entities score 1."""
    out = np.ones(len(idx))
    for i, refs in enumerate(idx.entity_refs):
        if refs:
            out[i] = aggregate_entity_scores([slot_scores[r] for r in refs])
    return out


def _refs_array(idx: AtomIndex) -> np.ndarray:
    cached = idx.__dict__.get("_gaze_refs")
    if cached is None:
        cached = -np.ones((len(idx), 2), dtype=np.int64)
        for i, refs in enumerate(idx.entity_refs):
            cached[i, :len(refs)] = refs
        object.__setattr__(idx, "_gaze_refs", cached)
    return cached


def modulate_valuation(v0: np.ndarray, Ghat: GazeHeatmap, idx: AtomIndex,
                       boxes: Sequence[Box | None], scale: str = "mass") -> np.ndarray:
    """``v_g = v0 * s`` with ``s`` the t-conorm of entity gaze scores per atom."""
    v0 = np.asarray(v0, dtype=float)
    if v0.shape != (len(idx),):
        raise GazeError(f"valuation length {v0.shape} does not match index {len(idx)}")
    if len(boxes) != idx.inventory.max_count:
        raise GazeError("need one box entry per inventory slot")
    refs = _refs_array(idx)
    for r in np.unique(refs[refs >= 0]):
        if boxes[r] is None and np.any(v0[(refs == r).any(axis=1)] > 0):
            raise GazeError(f"missing bounding box for present object in slot {r}")
    m = entity_scores(box_masses(Ghat, boxes), scale)
    return v0 * _atom_scores_fast(m[None, :], refs)[0]


def _atom_scores_fast(m: np.ndarray, refs: np.ndarray) -> np.ndarray:
    """Vectorized :func:`atom_scores` for a batch of slot scores ``(N, S)``."""
    r0, r1 = refs[:, 0], refs[:, 1]
    s0 = np.where(r0 >= 0, m[:, np.maximum(r0, 0)], 1.0)
    s1 = m[:, np.maximum(r1, 0)]
    two = 1.0 - (1.0 - s0) * (1.0 - s1)
    return np.where(r1 >= 0, two, s0)


def modulate_batch(V0: np.ndarray, heatmaps: Sequence[GazeHeatmap], idx: AtomIndex,
                   states: Sequence[LogicState], scale: str = "mass") -> np.ndarray:
    """Modulate a stack of valuations with per-frame heatmaps; boxes come from the states."""
    refs = _refs_array(idx)
    m = np.stack([entity_scores(box_masses(G, bounding_boxes(s)), scale)
                  for G, s in zip(heatmaps, states)]) if len(states) else np.zeros((0, idx.inventory.max_count))
    return V0 * _atom_scores_fast(m, refs)


# --------------------------------------------------------------------------- gaze model

@dataclass(frozen=True)
class GazeModelParams:
    """Per-type saliency logits, shared Gaussian bandwidth (px), background mass."""

    type_logits: Mapping[str, float]
    bandwidth: float = 3.0
    background: float = 0.05

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if not 0 <= self.background <= 1:
            raise ValueError("background mass must lie in [0, 1]")

    @classmethod
    def neutral(cls, inv: ObjectInventory, **kw) -> "GazeModelParams":
        return cls({t: 0.0 for t in inv.type_labels}, **kw)


def _object_kernels(state: LogicState, inv: ObjectInventory, sigma: float, dims):
    pres = state.present > 0
    cx, cy = centers(state.features, state.layout)
    H, W = dims
    sx, sy = (W / inv.frame[1]), (H / inv.frame[0])
    kernels, d2s, types = [], [], []
    jj = np.arange(W)[None, :]
    ii = np.arange(H)[:, None]
    for slot in np.flatnonzero(pres):
        x = float(np.clip(cx[slot] * sx, 0, W - 1))
        y = float(np.clip(cy[slot] * sy, 0, H - 1))
        d2 = (jj - x) ** 2 + (ii - y) ** 2
        g = np.exp(-d2 / (2 * sigma ** 2))
        z = g.sum()
        kernels.append(g / z)
        d2s.append(d2)
        types.append(inv.slot_type(slot))
    return kernels, d2s, types


def predict_heatmap(state: LogicState, params: GazeModelParams, inv: ObjectInventory,
                    dims=DEFAULT_DIMS) -> GazeHeatmap:
    kernels, _, types = _object_kernels(state, inv, params.bandwidth, dims)
    if not kernels:
        return GazeHeatmap.uniform(dims)
    logits = np.array([params.type_logits.get(t, 0.0) for t in types])
    p = np.exp(logits - logits.max())
    p /= p.sum()
    grid = (1 - params.background) * np.tensordot(p, np.stack(kernels), axes=1)
    grid = grid + params.background / (dims[0] * dims[1])
    return GazeHeatmap(grid)


@dataclass
class GazeFit:
    params: GazeModelParams
    losses: list[float] = field(default_factory=list)


def mean_kl(frames, params: GazeModelParams, inv: ObjectInventory) -> float:
    return float(np.mean([kl_divergence(G, predict_heatmap(s, params, inv, G.dims)) for s, G in frames]))


def fit_gaze_model(frames: Sequence[tuple[LogicState, GazeHeatmap]], params0: GazeModelParams,
                   inv: ObjectInventory, steps: int = 200, lr: float = 0.05) -> GazeFit:
    """Minimize the mean KL(G || g_phi(state)) over per-type logits, log-bandwidth
    and background logit with Adam (analytic gradients)."""
    frames = list(frames)
    if not frames:
        raise ValueError("gaze fitting needs a nonempty dataset")
    labels = list(inv.type_labels)
    n_t = len(labels)
    theta = np.array([params0.type_logits.get(t, 0.0) for t in labels]
                     + [np.log(params0.bandwidth), _logit(params0.background)])

    def unpack(th):
        return GazeModelParams({t: float(th[k]) for k, t in enumerate(labels)},
                               float(np.exp(th[n_t])), float(_sigmoid(th[n_t + 1])))

    def loss_grad(th):
        logits, sigma, b = th[:n_t], np.exp(th[n_t]), _sigmoid(th[n_t + 1])
        total, grad = 0.0, np.zeros_like(th)
        for state, G in frames:
            dims = G.dims
            kernels, d2s, types = _object_kernels(state, inv, sigma, dims)
            HW = dims[0] * dims[1]
            if not kernels:
                Ghat = np.full(dims, 1.0 / HW)
                total += kl_divergence(G, GazeHeatmap(Ghat))
                continue
            K = np.stack(kernels)
            tid = np.array([labels.index(t) for t in types])
            lo = logits[tid]
            p = np.exp(lo - lo.max())
            p /= p.sum()
            mix = np.tensordot(p, K, axes=1)
            Ghat = (1 - b) * mix + b / HW
            Gt = G.grid
            nz = Gt > 0
            total += float(np.sum(Gt[nz] * (np.log(Gt[nz]) - np.log(Ghat[nz]))))
            R = np.where(nz, -Gt / Ghat, 0.0)                        # dKL/dGhat
            r = np.tensordot(K, R, axes=2)                           # <R, K_o>
            pr = p * r
            for k in range(n_t):
                mk = tid == k
                grad[k] += (1 - b) * (pr[mk].sum() - p[mk].sum() * pr.sum())
            dK = np.stack([Ko * (d2 - np.sum(Ko * d2)) / sigma ** 3 for Ko, d2 in zip(K, d2s)])
            grad[n_t] += (1 - b) * np.sum(p * np.tensordot(dK, R, axes=2)) * sigma
            grad[n_t + 1] += np.sum(R * (1.0 / HW - mix)) * b * (1 - b)
        return total / len(frames), grad / len(frames)

    state = AdamState.zeros(len(theta))
    losses = []
    best = (np.inf, theta.copy())
    for step in range(steps + 1):
        loss, grad = loss_grad(theta)
        if not np.isfinite(loss):
            raise GazeError(f"gaze fit diverged at step {step}")
        losses.append(loss)
        if loss < best[0]:
            best = (loss, theta.copy())
        if step == steps:
            break
        theta, state = adam_step(theta, grad, state, lr, bounds=None)
    if steps == 0:
        return GazeFit(params0, losses)
    return GazeFit(unpack(best[1]), losses)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _logit(p, eps=1e-6):
    p = min(max(p, eps), 1 - eps)
    return float(np.log(p / (1 - p)))
