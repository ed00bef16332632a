#!/usr/bin/env python3
"""Time the forward chain and its gradient on the numba and numpy backends.

Valuations are random in [0, 1] over the full Seaquest inventory, which is
the largest graph the shipped rule bases produce.

    python3 benchmarks/bench_kernels.py --batch 32 256 --repeats 20
"""
import argparse
import json
import time

import numpy as np

from grail import _kernels
from grail.envs import make_game, preset
from grail.envs.seaquest import full_inventory
from grail.pipeline import Model, load_rules
from grail.reasoner import ReasonerConfig, forward_chain, loss_and_grad


def build():
    rb, _ = load_rules("seaquest", "seaquest-mini")
    game = make_game(preset("seaquest-mini"))
    game.inventory = full_inventory(game.cfg.env_name)
    return Model.build(rb, game)


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--batch", type=int, nargs="+", default=[32, 256])
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args()

    model = build()
    g = model.graph
    cfg = ReasonerConfig()
    rng = np.random.default_rng(args.seed)
    w = rng.uniform(size=g.n_weights)
    backends = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])
    if not args.json:
        print(f"atoms={len(model.idx)} ground_clauses={g.n_ground} weights={g.n_weights}")
    rows = []
    for B in args.batch:
        V = rng.uniform(size=(B, len(model.idx)))
        a = rng.integers(len(g.actions), size=B)
        ref = None
        for be in backends:
            loss_and_grad(V, a, w, g, cfg, backend=be)          # warm-up / jit compile
            fwd = best_of(lambda: forward_chain(V, w, g, cfg, backend=be), args.repeats)
            both = best_of(lambda: loss_and_grad(V, a, w, g, cfg, backend=be), args.repeats)
            grad = loss_and_grad(V, a, w, g, cfg, backend=be)[1]
            ref = grad if ref is None else ref
            rows.append({"backend": be, "batch": B, "forward_ms": 1e3 * fwd, "loss_grad_ms": 1e3 * both,
                         "max_grad_diff": float(np.abs(grad - ref).max())})
    if args.json:
        for r in rows:
            print(json.dumps(r))
        return
    print(f"{'backend':<8}{'batch':>7}{'forward ms':>12}{'loss+grad ms':>14}{'max |dgrad|':>13}")
    for r in rows:
        print(f"{r['backend']:<8}{r['batch']:>7}{r['forward_ms']:>12.3f}{r['loss_grad_ms']:>14.3f}"
              f"{r['max_grad_diff']:>13.2e}")


if __name__ == "__main__":
    main()
