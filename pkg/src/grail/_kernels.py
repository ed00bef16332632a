"""Hot loops of weighted forward chaining: numba kernels with numpy fallbacks.

Set ``GRAIL_DISABLE_NUMBA=1`` to force the numpy path.  Both paths compute the
same quantities; they agree to floating-point rounding.

Shapes: ``V`` (B, A) atom valuations, ``body`` (G, L) atom ids padded with -1,
``wslot`` (G,), ``head_clauses`` (H, K) ground-clause ids padded with -1,
``head_slot`` (G,) column of each ground clause in ``head_clauses`` (its head
is ``head_of[g]``).  ``mode`` 0 is log-sum-exp softor, 1 is ``min(1, sum)``.
"""
from __future__ import annotations

import os

import numpy as np

LSE, SUM = 0, 1


def _numba_wanted() -> bool:
    return os.environ.get("GRAIL_DISABLE_NUMBA", "0").lower() in ("0", "", "false", "no")


try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


# --------------------------------------------------------------------------- numpy

def body_products_np(V, body):
    safe = np.maximum(body, 0)
    factors = np.where(body[None, :, :] >= 0, V[:, safe], 1.0)
    return factors.prod(axis=2)


def _stack_vals(P, h_prev, w, wslot, head_clauses):
    C = P * w[wslot][None, :]
    hc = np.maximum(head_clauses, 0)
    vals = np.where(head_clauses[None] >= 0, C[:, hc], -np.inf)
    return np.concatenate([h_prev[:, :, None], vals], axis=2)


def _combine(vals, gamma, mode):
    if mode == SUM:
        return np.where(np.isfinite(vals), vals, 0.0).sum(axis=2)
    m = vals.max(axis=2)
    return m + gamma * np.log(np.exp((vals - m[..., None]) / gamma).sum(axis=2))


def chain_forward_np(P, h0, w, wslot, head_clauses, t_max, gamma, mode):
    B, H = h0.shape
    hs = np.empty((B, t_max + 1, H))
    us = np.empty((B, t_max, H))
    hs[:, 0] = h0
    for t in range(t_max):
        u = _combine(_stack_vals(P, hs[:, t], w, wslot, head_clauses), gamma, mode)
        us[:, t] = u
        hs[:, t + 1] = np.minimum(u, 1.0)
    return hs, us


def chain_backward_np(P, hs, us, w, wslot, head_clauses, head_of, head_slot, gamma, mode, gh, n_weights):
    t_max = us.shape[1]
    gC = np.zeros_like(P)
    for t in range(t_max - 1, -1, -1):
        vals = _stack_vals(P, hs[:, t], w, wslot, head_clauses)
        u = us[:, t]
        if mode == SUM:
            a = np.where(np.isfinite(vals), 1.0, 0.0)
        else:
            a = np.exp((vals - u[..., None]) / gamma)
        gu = np.where(u < 1.0, gh, 0.0)
        gC += gu[:, head_of] * a[:, head_of, head_slot + 1]
        gh = gu * a[:, :, 0]
    return np.bincount(wslot, weights=(gC * P).sum(axis=0), minlength=n_weights)


# --------------------------------------------------------------------------- numba

if HAVE_NUMBA:
    @numba.njit(cache=True)
    def body_products_nb(V, body):
        B = V.shape[0]
        G, L = body.shape
        out = np.ones((B, G))
        for b in range(B):
            for g in range(G):
                acc = 1.0
                for k in range(L):
                    a = body[g, k]
                    if a >= 0:
                        acc *= V[b, a]
                out[b, g] = acc
        return out

    @numba.njit(cache=True)
    def chain_forward_nb(P, h0, w, wslot, head_clauses, t_max, gamma, mode):
        B, H = h0.shape
        K = head_clauses.shape[1]
        hs = np.empty((B, t_max + 1, H))
        us = np.empty((B, t_max, H))
        for b in range(B):
            for j in range(H):
                hs[b, 0, j] = h0[b, j]
            for t in range(t_max):
                for j in range(H):
                    prev = hs[b, t, j]
                    if mode == 1:
                        u = prev
                        for k in range(K):
                            g = head_clauses[j, k]
                            if g >= 0:
                                u += w[wslot[g]] * P[b, g]
                    else:
                        m = prev
                        for k in range(K):
                            g = head_clauses[j, k]
                            if g >= 0:
                                c = w[wslot[g]] * P[b, g]
                                if c > m:
                                    m = c
                        s = np.exp((prev - m) / gamma)
                        for k in range(K):
                            g = head_clauses[j, k]
                            if g >= 0:
                                s += np.exp((w[wslot[g]] * P[b, g] - m) / gamma)
                        u = m + gamma * np.log(s)
                    us[b, t, j] = u
                    hs[b, t + 1, j] = min(u, 1.0)
        return hs, us

    @numba.njit(cache=True)
    def chain_backward_nb(P, hs, us, w, wslot, head_clauses, head_of, head_slot, gamma, mode, gh, n_weights):
        B = P.shape[0]
        H, K = head_clauses.shape
        t_max = us.shape[1]
        gC = np.zeros(P.shape)
        for b in range(B):
            g_h = gh[b].copy()
            for t in range(t_max - 1, -1, -1):
                for j in range(H):
                    u = us[b, t, j]
                    gu = g_h[j] if u < 1.0 else 0.0
                    prev = hs[b, t, j]
                    if mode == 1:
                        a0 = 1.0
                    else:
                        a0 = np.exp((prev - u) / gamma)
                    for k in range(K):
                        g = head_clauses[j, k]
                        if g >= 0:
                            if mode == 1:
                                a = 1.0
                            else:
                                a = np.exp((w[wslot[g]] * P[b, g] - u) / gamma)
                            gC[b, g] += gu * a
                    g_h[j] = gu * a0
        out = np.zeros(n_weights)
        G = P.shape[1]
        for g in range(G):
            acc = 0.0
            for b in range(B):
                acc += gC[b, g] * P[b, g]
            out[wslot[g]] += acc
        return out


def backend() -> str:
    return "numba" if HAVE_NUMBA and _numba_wanted() else "numpy"


def kernels(name: str | None = None):
    """Return ``(body_products, chain_forward, chain_backward)`` for a backend."""
    name = name or backend()
    if name == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba is not installed")
        return body_products_nb, chain_forward_nb, chain_backward_nb
    if name == "numpy":
        return body_products_np, chain_forward_np, chain_backward_np
    raise ValueError(f"unknown backend {name!r}")
