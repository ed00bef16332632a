import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from grail import predicates
from grail.gaze import (GazeError, GazeHeatmap, GazeModelParams, aggregate_entity_scores, box_masses,
                        entity_scores, fit_gaze_model, gaze_mass, kl_divergence, mean_kl,
                        modulate_batch, modulate_valuation, predict_heatmap, render_heatmap)
from grail.grounding import (LogicState, ObjectInventory, SoftPredicateParams, bounding_boxes,
                             build_atom_index, ground_valuation)
from grail.logic import parse_rulebase

INV = ObjectInventory("asterix", ((0, "player"), (1, "enemy"), (2, "bonus")), ("player", "enemy", "bonus"))
FULL = (0, 0, 83, 83)
unit = st.floats(0, 1, allow_nan=False)


def scene(xy, present=(1, 1, 1)):
    f = np.zeros((3, 4))
    f[:, 0] = present
    f[:, 1] = [0, 1, 2]
    f[:, 2:] = xy
    return LogicState("asterix", f)


def small_index():
    rb = parse_rulebase("left_bonus(X) :- type(O1,player), closeby(O1,O2), visible(O2).",
                        predicates.signatures("asterix"))
    return build_atom_index(rb, INV)


# -- heatmaps

def test_center_fixation():
    G = render_heatmap([(42, 42)])
    assert np.unravel_index(G.grid.argmax(), G.dims) == (42, 42)
    assert abs(G.grid.sum() - 1) < 1e-9


def test_mirror_symmetric_fixations():
    G = render_heatmap([(20, 30), (63, 30)])
    np.testing.assert_allclose(G.grid, G.grid[:, ::-1], atol=1e-15)


def test_narrow_sigma_concentrates_mass():
    G = render_heatmap([(10, 70)], sigma=0.25)
    assert G.grid[70, 10] >= 0.99
    assert gaze_mass(G, (10, 70, 10, 70)) >= 0.99


def test_empty_fixations_give_uniform():
    G = render_heatmap([])
    np.testing.assert_allclose(G.grid, 1 / 84 ** 2)


def test_bad_inputs():
    with pytest.raises(GazeError):
        render_heatmap([(100, 5)])
    with pytest.raises(GazeError):
        render_heatmap([(5, 5)], sigma=0)
    with pytest.raises(GazeError):
        GazeHeatmap(np.zeros((3, 3)))


@settings(max_examples=50, deadline=None)
@given(pts=st.lists(st.tuples(st.floats(0, 83), st.floats(0, 83)), min_size=1, max_size=5),
       sigma=st.floats(0.3, 8))
def test_heatmap_normalized(pts, sigma):
    G = render_heatmap(pts, sigma)
    assert abs(G.grid.sum() - 1) < 1e-9 and G.grid.min() >= 0


# -- KL

def test_kl_identity_and_closed_form():
    G = render_heatmap([(30, 40)], sigma=20.0)
    assert kl_divergence(G, G) == pytest.approx(0, abs=1e-12)
    # flooring at 1e-9 then renormalizing moves at most H*W*1e-9 of mass
    peaked = render_heatmap([(30, 40)])
    assert kl_divergence(peaked, peaked) <= 84 * 84 * 1e-9
    p = GazeHeatmap(np.array([[1.0, 0.0]]))
    q = GazeHeatmap(np.array([[0.5, 0.5]]))
    assert kl_divergence(p, q) == pytest.approx(math.log(2), abs=1e-12)


def test_kl_dimension_mismatch():
    with pytest.raises(GazeError):
        kl_divergence(GazeHeatmap.uniform((4, 4)), GazeHeatmap.uniform((4, 5)))


@settings(max_examples=50, deadline=None)
@given(a=arrays(float, (6, 6), elements=st.floats(0, 1)), b=arrays(float, (6, 6), elements=st.floats(0, 1)))
def test_kl_nonnegative(a, b):
    if a.sum() <= 0 or b.sum() <= 0:
        return
    assert kl_divergence(GazeHeatmap(a), GazeHeatmap(b)) >= 0


# -- gaze mass

def test_mass_whole_frame_and_empty_region():
    G = render_heatmap([(10, 10)], sigma=1.0)
    assert gaze_mass(G, FULL) == pytest.approx(1.0, abs=1e-12)
    assert gaze_mass(G, (60, 60, 83, 83)) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(cuts_x=st.lists(st.integers(1, 82), max_size=4, unique=True),
       cuts_y=st.lists(st.integers(1, 82), max_size=4, unique=True),
       pts=st.lists(st.tuples(st.floats(0, 83), st.floats(0, 83)), min_size=1, max_size=4))
def test_mass_partition_additive(cuts_x, cuts_y, pts):
    G = render_heatmap(pts)
    xs = [0] + sorted(cuts_x) + [84]
    ys = [0] + sorted(cuts_y) + [84]
    boxes = [(x0, y0, x1 - 1, y1 - 1) for x0, x1 in zip(xs, xs[1:]) for y0, y1 in zip(ys, ys[1:])]
    assert abs(sum(gaze_mass(G, b) for b in boxes) - 1) < 1e-9
    np.testing.assert_allclose(box_masses(G, boxes), [gaze_mass(G, b) for b in boxes], atol=1e-12)


# -- aggregation

def test_aggregate_examples():
    assert aggregate_entity_scores([0.5, 0.5]) == pytest.approx(0.75)
    assert aggregate_entity_scores([0.3]) == 0.3
    assert aggregate_entity_scores([0.2, 1.0, 0.4]) == 1.0
    with pytest.raises(GazeError):
        aggregate_entity_scores([])


@settings(max_examples=100, deadline=None)
@given(s=st.lists(unit, min_size=1, max_size=5), extra=unit, k=st.integers(0, 4))
def test_aggregate_properties(s, extra, k):
    agg = aggregate_entity_scores(s)
    assert max(s) - 1e-12 <= agg <= 1 + 1e-12
    assert aggregate_entity_scores(list(reversed(s))) == pytest.approx(agg, abs=1e-12)
    i = k % len(s)
    bumped = list(s)
    bumped[i] = max(bumped[i], extra)
    assert aggregate_entity_scores(bumped) >= agg - 1e-12


def test_peak_scale():
    np.testing.assert_allclose(entity_scores(np.array([0.2, 0.4, 0.0]), "peak"), [0.5, 1.0, 0.0])
    np.testing.assert_allclose(entity_scores(np.zeros(3), "peak"), 0.0)
    with pytest.raises(ValueError):
        entity_scores(np.ones(2), "bogus")


# -- modulation

def test_uniform_full_boxes_is_identity():
    idx = small_index()
    s = scene([[40, 40], [45, 40], [70, 70]])
    v0 = ground_valuation(s, SoftPredicateParams(), idx)
    vg = modulate_valuation(v0, GazeHeatmap.uniform(), idx, [FULL] * 3)
    np.testing.assert_allclose(vg, v0)


def test_zero_mass_object_silenced():
    idx = small_index()
    s = scene([[10, 10], [12, 10], [70, 70]])
    v0 = ground_valuation(s, SoftPredicateParams(), idx)
    vg = modulate_valuation(v0, render_heatmap([(10, 10)], sigma=0.5), idx, bounding_boxes(s))
    assert vg[idx.index("visible(2)")] == 0.0
    assert v0[idx.index("visible(2)")] == 1.0


def test_two_entity_composition():
    idx = small_index()
    i = idx.index("closeby(0,1)")
    v0 = np.zeros(len(idx))
    v0[i] = 0.8
    grid = np.zeros((84, 84))
    grid[10, 10] = grid[50, 50] = 0.5
    boxes = [(10, 10, 10, 10), (50, 50, 50, 50), (70, 70, 70, 70)]
    vg = modulate_valuation(v0, GazeHeatmap(grid), idx, boxes)
    assert vg[i] == pytest.approx(0.6)


def test_missing_box_for_present_object():
    idx = small_index()
    v0 = np.ones(len(idx))
    with pytest.raises(GazeError):
        modulate_valuation(v0, GazeHeatmap.uniform(), idx, [FULL, None, FULL])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), scale=st.sampled_from(["mass", "peak"]))
def test_modulation_contractive_and_batch_consistent(seed, scale):
    rng = np.random.default_rng(seed)
    idx = small_index()
    s = scene(rng.uniform(5, 78, (3, 2)))
    G = render_heatmap([tuple(rng.uniform(0, 83, 2))])
    v0 = ground_valuation(s, SoftPredicateParams(), idx)
    vg = modulate_valuation(v0, G, idx, bounding_boxes(s), scale)
    assert np.all(vg <= v0 + 1e-15)
    np.testing.assert_allclose(modulate_batch(v0[None], [G], idx, [s], scale)[0], vg)


# -- gaze model

def synth_frames(n=20, seed=0):
    rng = np.random.default_rng(seed)
    p = np.exp([0.0, 2.0, -1.0])
    p /= p.sum()
    frames = []
    for _ in range(n):
        s = scene(rng.uniform(8, 76, (3, 2)))
        fx = [tuple(np.clip(s.features[o, 2:] + rng.normal(0, 1, 2), 0, 83)) for o in rng.choice(3, 3, p=p)]
        frames.append((s, render_heatmap(fx)))
    return frames


def test_gaze_fit_self_consistent():
    frames = synth_frames()
    star = GazeModelParams({"player": 0.0, "enemy": 2.0, "bonus": -1.0}, bandwidth=3.0, background=0.05)
    fit = fit_gaze_model(frames, GazeModelParams.neutral(INV), INV, steps=100)
    assert fit.losses[-1] <= fit.losses[0]
    assert mean_kl(frames, fit.params, INV) <= 1.1 * mean_kl(frames, star, INV)


def test_gaze_fit_single_object_type_dominates():
    frames = []
    for x in (20, 40, 60):
        s = scene([[x, 30], [x, 60], [10, 10]], present=(1, 1, 0))
        frames.append((s, render_heatmap([(x, 60)])))
    fit = fit_gaze_model(frames, GazeModelParams.neutral(INV), INV, steps=60)
    lg = fit.params.type_logits
    assert lg["enemy"] > lg["player"] and lg["enemy"] > lg["bonus"]


def test_gaze_fit_zero_steps_returns_input():
    p0 = GazeModelParams({"player": 0.3, "enemy": -0.2, "bonus": 0.0}, 2.5, 0.1)
    assert fit_gaze_model(synth_frames(3), p0, INV, steps=0).params == p0


def test_predicted_heatmap_normalized():
    G = predict_heatmap(scene([[20, 20], [60, 60], [40, 40]]), GazeModelParams.neutral(INV), INV)
    assert abs(G.grid.sum() - 1) < 1e-9
