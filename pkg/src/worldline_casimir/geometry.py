"""Per-loop geometric observables for the two plate configurations.

Parallel plates only need the loop's z-extent.  For a half-plate
``{x = 0, z >= a}`` above the infinite plate ``z = 0`` the loop is shifted
laterally by ``xi`` (in units of sqrt(T)) and the relevant datum is

    l(xi) = max(height of the crossings of x = 0) - min(z),

which is zero when the shifted loop does not reach the plane ``x = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .loopgen import WorldlineLoop, extent

DEFAULT_N_XI = 128


class GeometryKind(str, Enum):
    PARALLEL = "parallel_plates"
    PERPENDICULAR = "perpendicular_plates"


@dataclass(frozen=True)
class GeometryConfig:
    kind: GeometryKind

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", GeometryKind(self.kind))
        except ValueError:
            choices = ", ".join(k.value for k in GeometryKind)
            raise ValueError(f"unknown geometry {self.kind!r}; expected one of {choices}") from None


@dataclass(frozen=True)
class PerpendicularObservable:
    """Crossing profile of one loop sampled on a midpoint grid in xi."""

    xi_nodes: np.ndarray
    l_of_xi: np.ndarray
    dxi: float

    def __post_init__(self):
        if self.xi_nodes.shape != self.l_of_xi.shape:
            raise ValueError("xi_nodes and l_of_xi must have equal length")


def parallel_observable(loop: WorldlineLoop) -> float:
    return extent(loop, "z")


def crossing_extent(loop: WorldlineLoop, xi: float) -> float:
    """l(xi) for a single lateral offset by direct scan of all polygon edges."""
    x = loop.points[:, 0] + xi
    z = loop.points[:, 2]
    x1, z1 = np.roll(x, -1), np.roll(z, -1)
    # a point exactly on x = 0 counts as x > 0
    cross = (x >= 0.0) != (x1 >= 0.0)
    if not cross.any():
        return 0.0
    t = x[cross] / (x[cross] - x1[cross])
    zc = z[cross] + t * (z1[cross] - z[cross])
    return float(zc.max() - z.min())


def _midpoint_nodes(x_min: float, x_max: float, n_xi: int) -> tuple[np.ndarray, float]:
    dxi = (x_max - x_min) / n_xi
    return -x_max + (np.arange(n_xi) + 0.5) * dxi, dxi


def perpendicular_observable(loop: WorldlineLoop, n_xi: int = DEFAULT_N_XI) -> PerpendicularObservable:
    """Sample l(xi) at ``n_xi`` midpoint nodes covering ``[-x_max, -x_min]``.

    Equivalent to calling :func:`crossing_extent` at every node, but each edge
    is only visited for the nodes whose level lies inside its x-range.
    """
    if n_xi < 2:
        raise ValueError(f"n_xi must be >= 2, got {n_xi}")
    x = loop.points[:, 0]
    z = loop.points[:, 2]
    x_min, x_max = float(x.min()), float(x.max())
    xi, dxi = _midpoint_nodes(x_min, x_max, n_xi)
    l_of_xi = np.zeros(n_xi)
    if dxi == 0.0:
        return PerpendicularObservable(xi, l_of_xi, 0.0)

    # node j crosses the edge (x_i, x_{i+1}) at level v_j = -xi_j iff lo < v_j <= hi
    levels = -xi[::-1]
    x1, z1 = np.roll(x, -1), np.roll(z, -1)
    lo = np.minimum(x, x1)
    hi = np.maximum(x, x1)
    first = np.searchsorted(levels, lo, side="right")
    stop = np.searchsorted(levels, hi, side="right")
    counts = stop - first
    edges = np.flatnonzero(counts)
    if edges.size == 0:
        return PerpendicularObservable(xi, l_of_xi, dxi)
    reps = counts[edges]
    edge_idx = np.repeat(edges, reps)
    offsets = np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps)
    node = np.repeat(first[edges], reps) + offsets
    v = levels[node]
    xa, xb = x[edge_idx], x1[edge_idx]
    za, zb = z[edge_idx], z1[edge_idx]
    t = (xa - v) / (xa - xb)
    zc = za + t * (zb - za)

    top = np.full(n_xi, -np.inf)
    np.maximum.at(top, node, zc)
    hit = np.isfinite(top)
    l_rev = np.zeros(n_xi)
    l_rev[hit] = top[hit] - z.min()
    l_of_xi = l_rev[::-1].copy()
    return PerpendicularObservable(xi, l_of_xi, dxi)
