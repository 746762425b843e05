"""Geometric kernels over a diagonal metric field.

Kernels that take part in training accept :class:`~argnn.autodiff.Value`
inputs and return a ``Value``; called with plain arrays they return arrays
(or floats for 1-D inputs), which is the convenient form for analysis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .graph import DatasetError, Graph
from .metric import MetricField


def _out(result: ad.Value, *inputs):
    if any(isinstance(x, ad.Value) for x in inputs):
        return result
    data = result.data
    return float(data) if data.ndim == 0 else data


def _rows(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, ad.Value) else x, dtype=np.float64)


def _check_positive(g) -> None:
    if np.any(_rows(g) <= 0):
        raise ValueError("metric entries must be positive")


def geodesic_distance(x, y, g_row):
    """Metric-weighted distance ``sqrt(sum_k g_k (x_k - y_k)^2)`` along the last axis."""
    _check_positive(g_row)
    diff = ad.sub(x, y)
    return _out(ad.sqrt(ad.vsum(ad.as_value(g_row) * diff * diff, axis=-1)), x, y, g_row)


def direction_vector(h_i, h_j, guard: float = 1e-6):
    """``(h_j - h_i) / (||h_j - h_i|| + guard)``; zero when the states coincide."""
    u = ad.sub(h_j, h_i)
    norm = ad.sqrt(ad.vsum(u * u, axis=-1))
    if u.ndim > 1:
        norm = ad.reshape(norm, norm.shape + (1,))
    return _out(u / (norm + guard), h_i, h_j)


def modulation_tau(d, g_row, baseline: float = 0.0):
    """Direction-weighted curvature switch ``sum_k d_k^2 tanh(-log g_k)``.

    A positive ``baseline`` maps the raw value to ``baseline + (1 - baseline) * tau``
    so that flat geometry no longer silences messages.
    """
    if not 0.0 <= baseline < 1.0:
        raise ValueError("baseline must lie in [0, 1)")
    _check_positive(g_row)
    d_val = ad.as_value(d)
    tau = ad.vsum(d_val * d_val * ad.tanh(-ad.log(g_row)), axis=-1)
    if baseline:
        tau = tau * (1.0 - baseline) + baseline
    return _out(tau, d, g_row)


def attention_alpha(h_i, h_j, g_i, g_j, guard: float = 1e-6):
    """Cosine similarity with the inner product in ``g_i`` and each norm in its own metric."""
    hi, hj = ad.as_value(h_i), ad.as_value(h_j)
    num = ad.vsum(ad.as_value(g_i) * hi * hj, axis=-1)
    den_i = ad.sqrt(ad.vsum(ad.as_value(g_i) * hi * hi, axis=-1))
    den_j = ad.sqrt(ad.vsum(ad.as_value(g_j) * hj * hj, axis=-1))
    return _out(num / (den_i * den_j + guard), h_i, h_j, g_i, g_j)


# curvature -------------------------------------------------------------------

def ricci_curvature(mf, g: Graph):
    """Per node and axis: ``sum_{j in N(i)} (g_ik - g_jk) / (2 |N(i)|)``.

    ``mf`` may be a :class:`MetricField`, an array or a tracked ``Value``.
    Isolated nodes get zero rows.
    """
    vals = mf.values if isinstance(mf, MetricField) else mf
    G = ad.as_value(vals)
    if G.shape[0] != g.num_nodes:
        raise ad.ShapeError("metric field and graph disagree on the node count")
    dst, src = g.directed
    diffs = ad.gather_rows(G, dst) - ad.gather_rows(G, src)
    summed = ad.scatter_add(diffs, dst, g.num_nodes)
    scale = 1.0 / (2.0 * np.maximum(g.degrees, 1))
    return _out(summed * scale[:, None], vals)


@dataclass(frozen=True)
class CurvatureField:
    ricci: np.ndarray  # (n, d)
    kappa: np.ndarray  # (n,)
    kappa_mean: float


def node_curvature_summary(ricci) -> CurvatureField:
    """Mean absolute curvature per node and its average over nodes."""
    ric = _rows(ricci)
    kappa = np.abs(ric).mean(axis=1)
    return CurvatureField(ric, kappa, float(kappa.mean()) if len(kappa) else 0.0)


def curvature_field(mf, g: Graph) -> CurvatureField:
    return node_curvature_summary(ricci_curvature(mf, g))


def ricci_energy(mf, g: Graph) -> float:
    ric = _rows(ricci_curvature(mf, g))
    return float(np.sum(ric * ric))


def ricci_flow_step(mf, g: Graph, dt: float, floor: float | None = None):
    """One explicit Euler step of ``dg/dt = -2 Ric``, clamped at the floor."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if isinstance(mf, MetricField):
        floor = mf.floor if floor is None else floor
        vals = mf.values
    else:
        vals = np.asarray(mf, dtype=np.float64)
        floor = 1e-6 if floor is None else floor
    stepped = np.maximum(vals - 2.0 * dt * ricci_curvature(vals, g), floor)
    return MetricField(stepped, floor) if isinstance(mf, MetricField) else stepped


def ricci_flow(mf, g: Graph, dt: float, steps: int):
    """Run ``steps`` Euler steps; returns the final field and the energy after each step."""
    energies = [ricci_energy(mf, g)]
    for _ in range(steps):
        mf = ricci_flow_step(mf, g, dt)
        energies.append(ricci_energy(mf, g))
    return mf, np.asarray(energies)


def nrmd(mf, g: Graph) -> float:
    """Edge-averaged ``||g_i - g_j|| / mean(||g_i||, ||g_j||)``."""
    if g.num_edges == 0:
        raise DatasetError("NRMD is undefined without edges")
    G = _rows(mf.values if isinstance(mf, MetricField) else mf)
    a, b = G[g.edges[:, 0]], G[g.edges[:, 1]]
    num = np.linalg.norm(a - b, axis=1)
    den = 0.5 * (np.linalg.norm(a, axis=1) + np.linalg.norm(b, axis=1))
    return float(np.mean(num / den))


def geodesic_rewire(g: Graph, H, mf) -> Graph:
    """Degree-preserving rewiring by learned geodesic distance.

    Node ``i`` keeps ``deg(i)`` partners: the nodes ``j != i`` closest to it
    under its own metric, smaller index first on ties. The result is the
    symmetrised union of all selections.
    """
    H = _rows(H)
    G = _rows(mf.values if isinstance(mf, MetricField) else mf)
    if H.shape != G.shape or H.shape[0] != g.num_nodes:
        raise ad.ShapeError("states and metric field must both be (num_nodes, d)")
    n = g.num_nodes
    picked = []
    for i in range(n):
        k = min(int(g.degrees[i]), n - 1)
        if k == 0:
            continue
        dist = np.sqrt(np.sum(G[i] * (H - H[i]) ** 2, axis=1))
        dist[i] = np.inf
        order = np.lexsort((np.arange(n), dist))
        picked.extend((i, int(j)) for j in order[:k])
    return g.with_edges(np.asarray(picked, dtype=np.int64).reshape(-1, 2))
