import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from scipy.optimize import brentq

from argnn import autodiff as ad
from argnn.metric import (DEFAULT_FLOOR, SOFTPLUS_INV_ONE, MetricEstimatorParams, MetricField,
                          MetricFloorError, aggregate_neighbors, estimate_metrics, softplus_inverse)

from conftest import make_graph


def test_star_center_aggregate():
    g = make_graph(3, [(0, 1), (0, 2)])
    H = np.array([[9.0, 9.0], [1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(aggregate_neighbors(H, g).data[0], [0.5, 0.5])


def test_isolated_aggregate_is_zero():
    g = make_graph(3, [(0, 1)])
    a = aggregate_neighbors(np.ones((3, 2)), g).data
    np.testing.assert_array_equal(a[2], [0.0, 0.0])


def test_regular_graph_with_equal_rows():
    cycle = make_graph(5, [(i, (i + 1) % 5) for i in range(5)])
    H = np.tile([0.3, -1.2, 7.0], (5, 1))
    np.testing.assert_allclose(aggregate_neighbors(H, cycle).data, H, rtol=1e-15)


def test_zero_parameters_give_ln2(path3):
    p = MetricEstimatorParams.constant(2, 4, 0.0)
    G = estimate_metrics(np.ones((3, 2)), path3, p).data
    np.testing.assert_allclose(G, math.log(2.0) + DEFAULT_FLOOR, rtol=0, atol=1e-15)


def test_softplus_inverse_one_matches_root():
    root = brentq(lambda b: math.log1p(math.exp(b)) - 1.0, 0.0, 1.0, xtol=1e-15)
    assert SOFTPLUS_INV_ONE == pytest.approx(root, abs=1e-12)
    assert SOFTPLUS_INV_ONE == pytest.approx(0.5413, abs=1e-4)


def test_unit_bias_gives_identity_metric(path3, rng):
    p = MetricEstimatorParams.constant(3, 5, SOFTPLUS_INV_ONE)
    G = estimate_metrics(rng.normal(size=(3, 3)), path3, p).data
    np.testing.assert_allclose(G, 1.0 + DEFAULT_FLOOR, rtol=0, atol=1e-12)


@given(hnp.arrays(np.float64, (6, 3), elements=st.floats(-50, 50)),
       st.floats(-40, 40), st.integers(0, 1000))
def test_floor_always_holds(H, bias, seed):
    g = make_graph(6, [(0, 1), (1, 2), (3, 4)])
    rng = np.random.default_rng(seed)
    p = MetricEstimatorParams(rng.normal(size=(6, 4)) * 5, rng.normal(size=4),
                              rng.normal(size=(4, 3)) * 5, np.full(3, bias))
    assert estimate_metrics(H, g, p).data.min() >= DEFAULT_FLOOR


def test_init_is_near_identity(rng):
    p = MetricEstimatorParams.init(8, 16, rng)
    G = estimate_metrics(rng.normal(size=(3, 8)), make_graph(3, [(0, 1)]), p).data
    assert np.all(np.abs(G - 1.0) < 0.1)


def test_jittered_init_range(rng):
    p = MetricEstimatorParams.init(12, 16, rng, jitter=True)
    half = math.sqrt(3 / 12)
    target = np.log1p(np.exp(p.b2))
    assert np.all((target >= 1 - half) & (target <= 1 + half))


def test_softplus_inverse_round_trip():
    y = np.array([1e-6, 0.1, 1.0, 30.0])
    np.testing.assert_allclose(np.log1p(np.exp(softplus_inverse(y))), y, rtol=1e-10)


def test_non_finite_estimate_raises(path3):
    p = MetricEstimatorParams.constant(1, 2, 0.0)
    with pytest.raises(FloatingPointError):
        estimate_metrics(np.array([[np.inf], [0.0], [0.0]]), path3,
                         MetricEstimatorParams(np.ones((2, 2)), p.b1, np.ones((2, 1)), p.b2))


def test_estimator_gradients(path3, rng):
    H = rng.normal(size=(3, 2))
    p = MetricEstimatorParams.init(2, 3, rng, jitter=True)
    sizes = [a.size for a in (p.W1, p.b1, p.W2, p.b2)]

    def f(flat):
        parts, o = [], 0
        for a, n in zip((p.W1, p.b1, p.W2, p.b2), sizes):
            parts.append(ad.reshape(flat[o:o + n], a.shape))
            o += n
        G = estimate_metrics(H, path3, dict(zip(("W1", "b1", "W2", "b2"), parts)))
        return ad.vsum(G * G)

    x0 = np.concatenate([p.W1.ravel(), p.b1, p.W2.ravel(), p.b2 + 0.3])
    assert ad.finite_difference_check(f, x0).passed


def test_field_floor_check_and_csv(tmp_path):
    mf = MetricField(np.array([[1.0, 2.5], [1e-6, 3.0]]))
    mf.check_floor()
    mf.to_csv(tmp_path / "g.csv")
    np.testing.assert_array_equal(MetricField.from_csv(tmp_path / "g.csv").values, mf.values)
    with pytest.raises(MetricFloorError, match=r"g\[0,1\]"):
        MetricField(np.array([[1.0, -0.5]])).check_floor()
