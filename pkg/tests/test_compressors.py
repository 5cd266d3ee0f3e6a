import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from flexcomm.compressors import (
    GainTracker,
    apply_compression,
    compress,
    compression_gain,
    error_feedback,
    k_for,
    pooled_gain,
    residual_update,
    topk_exact,
    topk_layerwise,
    topk_threshold,
)
from flexcomm.core import DenseGrad, ResidualStore, SparseGrad, densify, flatten


def sort_oracle(v, k):
    """Stable full sort by descending magnitude; lower index wins ties."""
    order = np.argsort(-np.abs(v), kind="stable")
    return np.sort(order[:k])


def distinct_magnitudes(rng, n):
    return rng.permutation(np.arange(1, n + 1)).astype(float) * rng.choice([-1.0, 1.0], n)


vectors = arrays(np.float64, st.integers(1, 200), elements=st.floats(-1e3, 1e3, allow_nan=False))
ratios = st.floats(1e-3, 1.0)


def test_k_for_ceiling_and_floor():
    assert k_for(0.4, 5) == 2
    assert k_for(0.1, 30) == 3
    assert k_for(1e-6, 10) == 1
    assert k_for(1.0, 7) == 7
    assert k_for(0.34, 10) == 4


@pytest.mark.parametrize("c", [0.0, -0.1, 1.5, float("nan")])
def test_bad_ratio(c):
    with pytest.raises(ValueError):
        topk_exact(DenseGrad(np.ones(3)), c)


def test_topk_exact_example():
    s = topk_exact(DenseGrad(np.array([3, -7, 1, 0, 5])), 0.4)
    assert s.indices.tolist() == [1, 4]
    assert s.values.tolist() == [-7, 5]


def test_topk_exact_full_ratio_identity():
    g = DenseGrad(np.array([3.0, -7.0]))
    s = topk_exact(g, 1.0)
    assert np.array_equal(densify(s).values, g.values)
    assert np.all(residual_update(g, s) == 0)


def test_topk_exact_tie_keeps_lower_index():
    s = topk_exact(DenseGrad(np.array([1.0, -2.0, 2.0, 2.0, 0.5])), 0.4)
    assert s.indices.tolist() == [1, 2]


def test_topk_exact_matches_sort_oracle_with_ties(rng):
    for _ in range(200):
        v = rng.integers(-3, 4, size=rng.integers(1, 40)).astype(float)
        c = rng.uniform(0.01, 1.0)
        assert topk_exact(DenseGrad(v), c).indices.tolist() == sort_oracle(v, k_for(c, v.size)).tolist()


@given(vectors, ratios)
def test_topk_exact_separates_kept_from_dropped(v, c):
    g = DenseGrad(v)
    s = topk_exact(g, c)
    assert s.k == k_for(c, v.size)
    dropped = np.setdiff1d(np.arange(v.size), s.indices)
    if dropped.size:
        assert np.abs(s.values).min() >= np.abs(v[dropped]).max()
    assert np.array_equal(s.values, v[s.indices])


def test_layerwise_example():
    g = flatten([[9, 1], [2, 8]])
    s = topk_layerwise(g, 0.5)
    assert s.indices.tolist() == [0, 3]
    assert s.values.tolist() == [9, 8]


@given(vectors, ratios)
def test_layerwise_single_layer_equals_global(v, c):
    g = DenseGrad(v)
    assert topk_layerwise(g, c).indices.tolist() == topk_exact(g, c).indices.tolist()


def test_layerwise_full_ratio_identity(rng):
    g = flatten([rng.normal(size=5), rng.normal(size=3)])
    assert np.array_equal(densify(topk_layerwise(g, 1.0)).values, g.values)


def test_layerwise_per_layer_sort_oracle(rng):
    for _ in range(100):
        sizes = rng.integers(1, 20, size=rng.integers(1, 5))
        layers = [rng.normal(size=n) for n in sizes]
        c = rng.uniform(0.05, 1.0)
        expected, off = [], 0
        for layer in layers:
            expected.extend(sort_oracle(layer, k_for(c, layer.size)) + off)
            off += layer.size
        assert topk_layerwise(flatten(layers), c).indices.tolist() == expected


def test_layerwise_gain_not_above_global_when_mass_is_in_one_layer(rng):
    for _ in range(100):
        big = rng.normal(size=30) * 10
        small = rng.normal(size=30) * 0.01
        g = flatten([big, small])
        c = rng.uniform(0.05, 0.5)
        assert compression_gain(g, topk_layerwise(g, c)) <= compression_gain(g, topk_exact(g, c))


def test_threshold_matches_exact_on_distinct_magnitudes(rng):
    for _ in range(100):
        n = int(rng.integers(1, 2000))
        g = DenseGrad(distinct_magnitudes(rng, n))
        c = rng.uniform(0.001, 1.0)
        assert topk_threshold(g, c, 25).indices.tolist() == topk_exact(g, c).indices.tolist()


def test_threshold_single_round_keeps_upper_half(rng):
    v = rng.normal(size=101)
    a = np.abs(v)
    s = topk_threshold(DenseGrad(v), 0.01, rounds=1)
    assert s.indices.tolist() == np.flatnonzero(a >= a.max() / 2).tolist()


def test_threshold_full_ratio_identity(rng):
    v = rng.normal(size=50)
    s = topk_threshold(DenseGrad(v), 1.0)
    assert s.k == 50


def test_threshold_rounds_validated():
    with pytest.raises(ValueError):
        topk_threshold(DenseGrad(np.ones(3)), 0.5, rounds=0)


@given(arrays(np.float64, st.integers(10, 500), elements=st.floats(-1e3, 1e3, allow_nan=False, width=32)), ratios)
def test_threshold_approximation_contract(v, c):
    assume(np.abs(v).max() > 0)
    k = k_for(c, v.size)
    s = topk_threshold(DenseGrad(v), c)
    assert s.k >= k
    # extra elements can only come from magnitudes inside the final bracket
    assert abs(s.k - k) <= max(2, 0.05 * k) or np.unique(np.abs(v)).size < v.size


def test_compress_dispatch():
    g = DenseGrad(np.array([3.0, -7.0, 1.0, 0.0, 5.0]))
    for name in ("exact", "layerwise", "threshold"):
        assert compress(name, g, 0.4).indices.tolist() == [1, 4]
    with pytest.raises(ValueError):
        compress("random", g, 0.4)


def test_error_feedback_examples():
    rs = ResidualStore(1, 2)
    rs.set(0, np.array([1.0, 0.0]))
    assert error_feedback(DenseGrad(np.array([1.0, 0.0])), rs, 0).values.tolist() == [2, 0]
    rs.reset()
    g = DenseGrad(np.array([1.5, -2.0]))
    assert np.array_equal(error_feedback(g, rs, 0).values, g.values)
    rs.set(0, np.array([-1.0, -2.0]))
    assert error_feedback(DenseGrad(np.array([1.0, 2.0])), rs, 0).values.tolist() == [0, 0]


def test_error_feedback_length_mismatch():
    with pytest.raises(ValueError):
        error_feedback(DenseGrad(np.ones(3)), ResidualStore(1, 2), 0)


def test_residual_update_example():
    g_e = DenseGrad(np.array([3, -7, 1, 0, 5]))
    g_c = SparseGrad([1, 4], [-7, 5], 5)
    assert residual_update(g_e, g_c).tolist() == [3, 0, 1, 0, 0]


def test_residual_update_full_is_zero(rng):
    g = DenseGrad(rng.normal(size=9))
    assert np.all(residual_update(g, topk_exact(g, 1.0)) == 0)


def test_residual_update_length_mismatch():
    with pytest.raises(ValueError):
        residual_update(DenseGrad(np.ones(4)), SparseGrad([0], [1.0], 5))


def test_gain_example():
    g_e = DenseGrad(np.array([3, -7, 1, 0, 5]))
    gain = compression_gain(g_e, SparseGrad([1, 4], [-7, 5], 5))
    assert gain == pytest.approx(74 / 84)
    assert round(gain, 4) == 0.8810


def test_gain_full_is_one(rng):
    g = DenseGrad(rng.normal(size=20))
    assert compression_gain(g, topk_exact(g, 1.0)) == 1.0


def test_gain_degenerate():
    with pytest.raises(ValueError, match="degenerate gradient"):
        compression_gain(DenseGrad(np.zeros(3)), SparseGrad([0], [0.0], 3))


@given(vectors, ratios, ratios)
def test_gain_monotone_in_ratio(v, c1, c2):
    assume(np.dot(v, v) > 0)
    lo, hi = sorted((c1, c2))
    g = DenseGrad(v)
    assert compression_gain(g, topk_exact(g, lo)) <= compression_gain(g, topk_exact(g, hi))


def test_pooled_gain_is_energy_ratio():
    a = DenseGrad(np.array([3.0, 4.0]))
    b = DenseGrad(np.array([0.0, 1.0]))
    sa = SparseGrad([1], [4.0], 2)
    sb = SparseGrad([1], [1.0], 2)
    assert pooled_gain([a, b], [sa, sb]) == pytest.approx(17 / 26)


def test_gain_tracker_window():
    t = GainTracker(window=3)
    assert math.isnan(t.mean)
    for x in (0.1, 0.2, 0.3, 0.4):
        t.push(x)
    assert t.count == 3
    assert t.mean == pytest.approx(0.3)
    assert t.last == 0.4
    st_ = t.state()
    t.reset()
    assert t.count == 0
    t.load(st_)
    assert t.mean == pytest.approx(0.3)
    with pytest.raises(ValueError):
        GainTracker(0)


@pytest.mark.parametrize("name", ["exact", "layerwise", "threshold"])
def test_error_feedback_identity_over_steps(rng, name):
    rs = ResidualStore(1, 64)
    layout = (("a", 0, 40), ("b", 40, 24))
    for _ in range(200):
        g_o = DenseGrad(rng.normal(size=64), layout)
        g_e, g_c = apply_compression(g_o, rs, 0, 0.05, name)
        assert np.array_equal(densify(g_c).values + rs.get(0), g_e.values)
        assert np.all(rs.get(0)[g_c.indices] == 0)
