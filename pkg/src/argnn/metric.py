"""Per-node diagonal metric fields and the local metric estimator."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .graph import Graph

DEFAULT_FLOOR = 1e-6
# softplus(SOFTPLUS_INV_ONE) == 1
SOFTPLUS_INV_ONE = math.log(math.e - 1.0)


class MetricFloorError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class MetricField:
    """Row ``i`` holds the positive diagonal ``g_i`` of node ``i``'s metric."""

    values: np.ndarray
    floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        if not self.floor > 0:
            raise ValueError("metric floor must be positive")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValueError("metric field must be a (num_nodes, d) matrix")
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def check_floor(self, where: str = "") -> None:
        bad = ~(self.values >= self.floor)
        if bad.any():
            i, k = map(int, np.argwhere(bad)[0])
            raise MetricFloorError(
                f"metric entry g[{i},{k}]={self.values[i, k]!r} below floor {self.floor}"
                + (f" ({where})" if where else ""))

    def to_csv(self, path) -> None:
        lines = "".join(",".join(repr(float(v)) for v in row) + "\n" for row in self.values)
        Path(path).write_text(lines, encoding="utf-8")

    @classmethod
    def from_csv(cls, path, floor: float = DEFAULT_FLOOR) -> "MetricField":
        rows = [[float(v) for v in line.split(",")]
                for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
        return cls(np.asarray(rows), floor)


@dataclass
class MetricEstimatorParams:
    """Two-layer network ``2d -> hidden -> d`` with a rectifier in between."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, dim: int, hidden: int, rng: np.random.Generator,
             jitter: bool = False, final_scale: float = 1e-2) -> "MetricEstimatorParams":
        """Near-identity start: the output bias maps to g ~= 1.

        With ``jitter`` each output bias is drawn so that softplus(bias) is
        uniform on ``[1 - sqrt(3/d), 1 + sqrt(3/d)]`` (clipped to stay positive).
        """
        limit = math.sqrt(6.0 / (2 * dim + hidden))
        W1 = rng.uniform(-limit, limit, (2 * dim, hidden))
        W2 = rng.uniform(-final_scale, final_scale, (hidden, dim))
        if jitter:
            half = math.sqrt(3.0 / dim)
            target = np.clip(rng.uniform(1 - half, 1 + half, dim), 1e-3, None)
            b2 = softplus_inverse(target)
        else:
            b2 = np.full(dim, SOFTPLUS_INV_ONE)
        return cls(W1, np.zeros(hidden), W2, b2)

    @classmethod
    def constant(cls, dim: int, hidden: int, bias: float) -> "MetricEstimatorParams":
        return cls(np.zeros((2 * dim, hidden)), np.zeros(hidden), np.zeros((hidden, dim)),
                   np.full(dim, float(bias)))


def softplus_inverse(y):
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


def aggregate_neighbors(H, g: Graph) -> ad.Value:
    """Mean of neighbour rows; isolated nodes get a zero row."""
    H = ad.as_value(H)
    if H.shape[0] != g.num_nodes:
        raise ad.ShapeError(f"states have {H.shape[0]} rows for {g.num_nodes} nodes")
    dst, src = g.directed
    summed = ad.scatter_add(ad.gather_rows(H, src), dst, g.num_nodes)
    inv_deg = 1.0 / np.maximum(g.degrees, 1)
    return summed * inv_deg[:, None]


def estimate_metrics(H, g: Graph, p, floor: float = DEFAULT_FLOOR) -> ad.Value:
    """``g_i = softplus(MLP([h_i ; a_i])) + floor`` for every node.

    ``p`` is a :class:`MetricEstimatorParams` or a mapping with keys
    ``W1, b1, W2, b2`` whose values may be tracked :class:`Value` objects.
    """
    H = ad.as_value(H)
    if isinstance(p, MetricEstimatorParams):
        W1, b1, W2, b2 = p.W1, p.b1, p.W2, p.b2
    else:
        W1, b1, W2, b2 = p["W1"], p["b1"], p["W2"], p["b2"]
    z = ad.concat([H, aggregate_neighbors(H, g)], axis=1)
    hidden = ad.relu(ad.matmul(z, W1) + b1)
    raw = ad.matmul(hidden, W2) + b2
    if not np.all(np.isfinite(raw.data)):
        raise FloatingPointError("metric estimator produced a non-finite output")
    return ad.softplus(raw) + floor
