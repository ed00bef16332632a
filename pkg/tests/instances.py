"""Random small rule bases, inventories and valuations, plus independent
reference implementations (brute-force grounding, boolean forward chaining)."""
import itertools

import numpy as np

from grail import predicates
from grail.grounding import ObjectInventory, build_atom_index
from grail.logic import TYPE_SORT, Variable, parse_rulebase
from grail.reasoner import EmptyGraphError, compile_graph

SIGS = predicates.signatures("asterix")
TYPES = ("player", "enemy", "bonus")
HEADS = ("noop_a", "up_a", "up_b", "right_a", "left_a", "down_a")
BINARY = ("closeby", "notcloseby", "same_row", "on_left", "on_right", "above_row", "closest")
UNARY = ("visible", "at_top", "on_odd", "on_even")
VARS = ("O1", "O2", "O3")


def random_clause(rng):
    atoms = []
    if rng.random() < 0.6:
        atoms.append(f"type(O1,{TYPES[rng.integers(3)]})")
    for _ in range(rng.integers(1, 4)):
        r = rng.random()
        if r < 0.55:
            a, b = rng.choice(len(VARS), 2, replace=False)
            atoms.append(f"{BINARY[rng.integers(len(BINARY))]}({VARS[a]},{VARS[b]})")
        elif r < 0.85:
            atoms.append(f"{UNARY[rng.integers(len(UNARY))]}({VARS[rng.integers(len(VARS))]})")
        else:
            atoms.append(f"type({VARS[rng.integers(len(VARS))]},{TYPES[rng.integers(3)]})")
    return f"{HEADS[rng.integers(len(HEADS))]}(X) :- {', '.join(atoms)}."


def random_instance(rng, max_clauses=10, max_objects=6):
    """``(rb, idx, graph)`` with a non-empty ground graph."""
    while True:
        n_obj = int(rng.integers(2, max_objects + 1))
        slots = ((0, "player"),) + tuple((i, TYPES[1 + rng.integers(2)]) for i in range(1, n_obj))
        inv = ObjectInventory("asterix", slots, TYPES)
        text = "\n".join(random_clause(rng) for _ in range(rng.integers(1, max_clauses + 1)))
        rb = parse_rulebase(text, SIGS)
        idx = build_atom_index(rb, inv)
        try:
            return rb, idx, compile_graph(rb, idx)
        except EmptyGraphError:
            continue


def brute_force_groundings(rb, inv):
    """Every (clause id, ground body strings) by enumerating all injective
    slot assignments and filtering on argument sorts and type labels."""
    out = []
    for cid, c in enumerate(rb.clauses):
        variables = sorted({t for a in c.body for t in a.args if isinstance(t, Variable)}, key=lambda v: v.name)
        for combo in itertools.permutations(range(inv.max_count), len(variables)):
            bind = dict(zip(variables, combo))
            ok, body = True, []
            for a in c.body:
                args = []
                for t, sort in zip(a.args, a.predicate.arg_sorts):
                    if isinstance(t, Variable):
                        slot = bind[t]
                        if sort not in ("object", TYPE_SORT) and inv.slot_type(slot) != sort:
                            ok = False
                        args.append(str(slot))
                    else:
                        args.append(t.name)
                if a.predicate.name == "type" and inv.slot_type(int(args[0])) != args[1]:
                    ok = False
                body.append(f"{a.predicate.name}({','.join(args)})")
            if ok:
                out.append((cid, tuple(body)))
    return out


def boolean_chain(V, w, rb, idx, t_max=2):
    """Classical forward chaining on crisp valuations with crisp weights."""
    ground = brute_force_groundings(rb, idx.inventory)
    out = np.array(V, dtype=float).copy()
    heads = {h: idx.index(f"{h}(player)") for h in rb.action_heads}
    for _ in range(t_max):
        prev = out.copy()
        for cid, body in ground:
            c = rb.clauses[cid]
            if w[c.weight_slot] == 1 and all(prev[idx.index(b)] == 1 for b in body):
                out[heads[c.head.predicate.name]] = 1.0
    return out


def fd_relative_error(rng, h=1e-5, gamma=0.01, tau=1.0, backend=None):
    """Max relative error between the analytic gradient and central finite
    differences on one random instance, or ``None`` when a perturbation
    crosses a hard-max tie or the clamp at 1."""
    from grail.reasoner import ReasonerConfig, _forward, _reduce_actions, loss_and_grad
    rb, idx, g = random_instance(rng)
    cfg = ReasonerConfig(gamma=gamma, policy_temperature=tau)
    B = int(rng.integers(1, 9))
    V = rng.uniform(size=(B, len(idx)))
    V[:, idx.n_body:] = 0.0
    a = rng.integers(len(g.actions), size=B)
    w = rng.uniform(0.05, 0.95, size=g.n_weights)

    def regime(wv):
        tr = _forward(V, wv, g, cfg, backend)
        return (tr.us < 1).tobytes() + _reduce_actions(tr.hs[:, -1], g)[1].tobytes()

    base = regime(w)
    _, grad = loss_and_grad(V, a, w, g, cfg, backend)
    fd = np.zeros_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = h
        if regime(w + e) != base or regime(w - e) != base:
            return None
        fd[i] = (loss_and_grad(V, a, w + e, g, cfg, backend, need_grad=False)[0]
                 - loss_and_grad(V, a, w - e, g, cfg, backend, need_grad=False)[0]) / (2 * h)
    scale = max(np.abs(fd).max(), np.abs(grad).max(), 1e-8)
    return float(np.abs(grad - fd).max() / scale)


def boolean_case(rng, gamma=1e-4):
    """``(max abs deviation from boolean chaining)`` on one crisp instance."""
    from grail.reasoner import ReasonerConfig, forward_chain
    rb, idx, g = random_instance(rng)
    V = (rng.random(len(idx)) < 0.6).astype(float)
    V[idx.n_body:] = (rng.random(len(idx) - idx.n_body) < 0.2)
    w = (rng.random(g.n_weights) < 0.6).astype(float)
    soft = forward_chain(V, w, g, ReasonerConfig(gamma=gamma))
    return float(np.abs(soft - boolean_chain(V, w, rb, idx)).max())
