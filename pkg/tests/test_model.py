import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from argnn import autodiff as ad
from argnn.diagnostics import gradcheck_model, random_instance
from argnn.fixtures import random_graph
from argnn.metric import SOFTPLUS_INV_ONE, MetricEstimatorParams
from argnn.model import (ADAPTIVE, GeometryMode, ModelConfig, config_hash,
                         edge_scores, init_params, layer_forward, load_checkpoint, model_forward,
                         save_checkpoint)

from conftest import make_graph

EPS = 1e-6


def mm(a, b):
    # the engine's own matmul kernel, so "exact" means bit-for-bit
    return ad.matmul(ad.Value(a), ad.Value(b)).data


def layer_params(rng, d_in, d_out, jitter=True):
    est = MetricEstimatorParams.init(d_in, 6, rng, jitter=jitter)
    est.W2 = rng.normal(scale=0.4, size=est.W2.shape)
    return {"W_s": rng.normal(size=(d_in, d_out)), "W_m": rng.normal(size=(d_in, d_out)),
            "metric": est}


def naive_layer(H, g, lp, eps=EPS):
    """Straight-line evaluation of one layer, one node and one edge at a time."""
    n, d = H.shape
    est = lp["metric"]
    nbrs = [[] for _ in range(n)]
    for a, b in g.edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    G = np.empty((n, d))
    for i in range(n):
        agg = np.mean([H[j] for j in nbrs[i]], axis=0) if nbrs[i] else np.zeros(d)
        hidden = np.maximum(np.concatenate([H[i], agg]) @ est.W1 + est.b1, 0.0)
        raw = hidden @ est.W2 + est.b2
        G[i] = [math.log1p(math.exp(v)) if v < 30 else v for v in raw]
        G[i] += eps
    out = np.empty((n, lp["W_s"].shape[1]))
    for i in range(n):
        total = H[i] @ lp["W_s"]
        for j in nbrs[i]:
            u = H[j] - H[i]
            dvec = u / (math.sqrt(u @ u) + eps)
            tau = sum(dvec[k] ** 2 * math.tanh(-math.log(G[i, k])) for k in range(d))
            num = sum(G[i, k] * H[i, k] * H[j, k] for k in range(d))
            den_i = math.sqrt(sum(G[i, k] * H[i, k] ** 2 for k in range(d)))
            den_j = math.sqrt(sum(G[j, k] * H[j, k] ** 2 for k in range(d)))
            alpha = num / (den_i * den_j + eps)
            total = total + tau / (1 + math.exp(-alpha)) * (H[j] @ lp["W_m"])
        out[i] = np.maximum(total, 0.0)
    return out, G


def test_layer_matches_naive_oracle(rng):
    g = random_instance(12, 24, 5, seed=4)
    lp = layer_params(rng, 5, 7)
    H_out, G, _ = layer_forward(g.features, g, lp)
    ref_out, ref_G = naive_layer(g.features, g, lp)
    np.testing.assert_allclose(G.data, ref_G, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(H_out.data, ref_out, rtol=1e-12, atol=1e-12)


def test_fixed_one_silences_messages(rng):
    g = random_graph(10, 0.4, num_features=4, seed=2)
    lp = layer_params(rng, 4, 3)
    H_out, G, geom = layer_forward(g.features, g, lp, GeometryMode.parse("fixed:1"))
    assert not np.any(geom.tau)
    np.testing.assert_array_equal(H_out.data, np.maximum(mm(g.features, lp["W_s"]), 0.0))


def test_isolated_node_uses_self_path_only(rng):
    g = make_graph(4, [(0, 1), (1, 2)], features=rng.normal(size=(4, 3)))
    lp = layer_params(rng, 3, 2)
    for mode in (ADAPTIVE, GeometryMode.parse("fixed:0.5")):
        H_out, _, _ = layer_forward(g.features, g, lp, mode)
        np.testing.assert_array_equal(H_out.data[3], np.maximum(mm(g.features, lp["W_s"])[3], 0))


def test_one_layer_fixed_composition(rng):
    g = random_graph(8, 0.4, num_features=3, num_classes=3, seed=0)
    cfg = ModelConfig(3, 3, hidden=3, num_layers=1, mode=GeometryMode.parse("fixed:1"))
    p = init_params(cfg, rng)
    p.arrays["head.W"] = np.eye(3)
    p.arrays["head.b"] = np.array([0.1, -0.2, 0.3])
    out = model_forward(g.features, g, p, cfg).output.data
    ref = mm(np.maximum(mm(g.features, p["layers.0.W_s"]), 0.0), np.eye(3)) + p["head.b"]
    np.testing.assert_array_equal(out, ref)


@given(st.integers(1, 3), st.integers(1, 6), st.integers(2, 4), st.integers(0, 50))
def test_output_shape(layers, hidden, classes, seed):
    g = random_graph(9, 0.3, num_features=4, num_classes=classes, seed=seed)
    cfg = ModelConfig(4, classes, hidden=hidden, num_layers=layers)
    art = model_forward(g.features, g, init_params(cfg, np.random.default_rng(seed)), cfg)
    assert art.output.shape == (9, classes)
    assert len(art.metrics) == layers and len(art.states) == layers + 1


def test_eval_mode_is_deterministic(rng):
    g = random_graph(15, 0.3, num_features=4, seed=1)
    cfg = ModelConfig(4, 3, hidden=8)
    p = init_params(cfg, rng)
    a = model_forward(g.features, g, p, cfg).output.data
    b = model_forward(g.features, g, p, cfg).output.data
    assert a.tobytes() == b.tobytes()


def test_dropout_requires_rng(rng):
    g = random_graph(6, 0.5, num_features=2, seed=1)
    cfg = ModelConfig(2, 3, hidden=4)
    with pytest.raises(ValueError):
        model_forward(g.features, g, init_params(cfg, rng), cfg, 0.5, True, None)


def test_feature_shape_checked(rng):
    g = random_graph(6, 0.5, num_features=2, seed=1)
    cfg = ModelConfig(3, 3, hidden=4)
    with pytest.raises(ad.ShapeError):
        model_forward(g.features, g, init_params(cfg, rng), cfg)


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_permutation_equivariance_bit_exact(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(11, 0.35, num_features=4, seed=seed)
    cfg = ModelConfig(4, 3, hidden=6, num_layers=2)
    p = init_params(cfg, rng)
    perm = rng.permutation(11)
    out = model_forward(g.features, g, p, cfg).output.data
    out_p = model_forward(g.features[perm], g.permute(perm), p, cfg).output.data
    assert out_p.tobytes() == out[perm].tobytes()


def test_constant_estimator_reaches_fixed_mode(rng):
    g = random_graph(14, 0.3, num_features=5, seed=7)
    lp = layer_params(rng, 5, 4)
    lp["metric"] = MetricEstimatorParams.constant(5, 6, SOFTPLUS_INV_ONE)
    adaptive, _, _ = layer_forward(g.features, g, lp, ADAPTIVE)
    fixed, _, _ = layer_forward(g.features, g, lp, GeometryMode.parse(f"fixed:{1 + EPS!r}"))
    np.testing.assert_allclose(adaptive.data, fixed.data, rtol=0, atol=1e-9)


def test_geometry_mode_parse():
    assert GeometryMode.parse("adaptive").adaptive
    m = GeometryMode.parse("fixed:0.5")
    assert not m.adaptive and m.c == 0.5 and str(m) == "fixed:0.5"
    for bad in ("fixed:0", "fixed:-1", "fixed:x", "hyperbolic"):
        with pytest.raises(ValueError):
            GeometryMode.parse(bad)


def test_model_config_round_trip():
    cfg = ModelConfig(7, 3, hidden=16, num_layers=2, mode=GeometryMode.parse("fixed:2"))
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


def test_params_flatten_round_trip(rng):
    cfg = ModelConfig(3, 2, hidden=4, num_layers=2)
    p = init_params(cfg, rng)
    back = p.unflatten(p.flatten())
    for k in p.names():
        np.testing.assert_array_equal(back[k], p[k])


def test_checkpoint_round_trip(tmp_path, rng):
    cfg = ModelConfig(3, 2, hidden=4, num_layers=2)
    p = init_params(cfg, rng)
    meta = {"config_hash": config_hash(cfg.to_dict()), "note": "x"}
    path = save_checkpoint(tmp_path / "ck.bin", p, meta)
    q, meta2 = load_checkpoint(path)
    assert meta2 == meta and q.names() == p.names()
    for k in p.names():
        assert q[k].tobytes() == p[k].tobytes()


def test_checkpoint_rejects_other_files(tmp_path):
    (tmp_path / "junk").write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "junk")


def test_edge_scores(rng):
    g = random_graph(8, 0.4, num_features=3, seed=0)
    cfg = ModelConfig(3, 2, hidden=3, num_layers=1, task="edge")
    art = model_forward(g.features, g, init_params(cfg, rng), cfg)
    H = art.states[-1].data
    s = edge_scores(art, [[0, 1], [2, 5]]).data
    np.testing.assert_allclose(s, 1 / (1 + np.exp(-np.sum(H[[0, 2]] * H[[1, 5]], axis=1))))
    weighted = edge_scores(art, [[0, 1]], "metric").data
    assert weighted.shape == (1,)
    with pytest.raises(ValueError):
        edge_scores(art, [[0, 1]], "cosine")


def test_gradcheck_instance_passes():
    res = gradcheck_model(seed=3)
    assert res.passed and res.max_rel_error < 1e-5


def test_gradcheck_is_repeatable():
    assert gradcheck_model(seed=0).max_rel_error == gradcheck_model(seed=0).max_rel_error


@pytest.mark.parametrize("name", ["tau", "alpha"])
def test_broken_backward_fails_gradcheck(name):
    res = gradcheck_model(seed=1, break_gradient=name)
    assert not res.passed
