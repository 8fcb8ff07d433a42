"""Ensemble averages, paired force ratios and temperature sweeps.

Forces are reported as dimensionless coefficients, ``F a^4 / A`` (parallel)
or ``F a^3 / L`` (perpendicular), directly comparable with
:mod:`worldline_casimir.reference`.  Attractive forces are negative.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import (DEFAULT_N_XI, GeometryConfig, GeometryKind, parallel_observable,
                       perpendicular_observable)
from .loopgen import LoopEnsemble
from .thermal import ZERO_TEMPERATURE, ThermalParams, kernel_parallel, perp_integrands

# F = -(1/2) (4 pi)^-2 <integrand> in units of the separation
FORCE_PREFACTOR = 1.0 / (32.0 * math.pi**2)


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    n_samples: int


@dataclass(frozen=True)
class ForceResult:
    kind: GeometryKind
    aT: float
    ratio: MCEstimate
    coefficient: MCEstimate
    # coefficient(T) - coefficient(0), paired per loop
    shift: MCEstimate


def mean_stderr(samples: Sequence[float]) -> MCEstimate:
    """Mean and standard error from one Welford pass in sample order."""
    n = len(samples)
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    mean = 0.0
    m2 = 0.0
    for k, x in enumerate(samples, start=1):
        x = float(x)
        delta = x - mean
        mean += delta / k
        m2 += delta * (x - mean)
    var = m2 / (n - 1)
    return MCEstimate(mean, math.sqrt(var / n), n)


def paired_ratio(num: np.ndarray, den: np.ndarray) -> MCEstimate:
    """<num>/<den> over paired samples, error propagated to first order.

    The residuals ``num - R den`` carry the covariance between numerator and
    denominator, so identical inputs give a ratio of exactly 1 with zero error.
    """
    num_m = mean_stderr(num).mean
    den_m = mean_stderr(den).mean
    ratio = num_m / den_m
    resid = mean_stderr(np.asarray(num) - ratio * np.asarray(den))
    return MCEstimate(ratio, resid.stderr / abs(den_m), len(num))


@dataclass(frozen=True)
class Observables:
    """Geometry-reduced data of a whole ensemble, reused across temperatures.

    ``extents`` has shape ``(n_loops,)`` for parallel plates and
    ``(n_loops, n_xi)`` for perpendicular plates, where ``dxi`` holds each
    loop's node spacing.
    """

    kind: GeometryKind
    extents: np.ndarray
    dxi: np.ndarray | None = None

    def integrands(self, params: ThermalParams) -> np.ndarray:
        if self.kind is GeometryKind.PARALLEL:
            return kernel_parallel(self.extents, params)
        return perp_integrands(self.extents, self.dxi, params)


def _loop_observables(ensemble: LoopEnsemble, kinds, n_xi: int, k: int):
    loop = ensemble.loop(k)
    out = {}
    for kind in kinds:
        if kind is GeometryKind.PARALLEL:
            out[kind] = parallel_observable(loop)
        else:
            obs = perpendicular_observable(loop, n_xi)
            out[kind] = (obs.l_of_xi, obs.dxi)
    return out


def compute_observables(ensemble: LoopEnsemble, geometries, n_xi: int = DEFAULT_N_XI,
                        workers: int = 1, progress=None) -> dict[GeometryKind, Observables]:
    """Reduce every loop once for each requested geometry.

    Loops are visited in parallel when ``workers > 1`` but results are stored
    by loop index, so the output does not depend on the worker count.
    """
    kinds = [GeometryConfig(g).kind if not isinstance(g, GeometryConfig) else g.kind
             for g in geometries]
    n = ensemble.count
    par = np.empty(n)
    perp = np.empty((n, n_xi))
    dxi = np.empty(n)

    def store(k, res):
        for kind, val in res.items():
            if kind is GeometryKind.PARALLEL:
                par[k] = val
            else:
                perp[k], dxi[k] = val
        if progress is not None:
            progress(k)

    if workers <= 1:
        for k in range(n):
            store(k, _loop_observables(ensemble, kinds, n_xi, k))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = pool.map(lambda k: _loop_observables(ensemble, kinds, n_xi, k), range(n))
            for k, res in enumerate(results):
                store(k, res)

    out = {}
    for kind in kinds:
        if kind is GeometryKind.PARALLEL:
            out[kind] = Observables(kind, par)
        else:
            out[kind] = Observables(kind, perp, dxi)
    return out


def results_from_observables(obs: Observables, aT_values: Sequence[float],
                             trunc_eps: float | None = None) -> list[ForceResult]:
    if obs.extents.shape[0] < 2:
        raise ValueError("need at least 2 loops for error estimates")
    zero = obs.integrands(ZERO_TEMPERATURE)
    coeff_zero = -FORCE_PREFACTOR * zero
    results = []
    for aT in aT_values:
        params = (ThermalParams.from_aT(aT) if trunc_eps is None
                  else ThermalParams.from_aT(aT, trunc_eps))
        hot = zero if params.is_zero_temperature else obs.integrands(params)
        coeff = -FORCE_PREFACTOR * hot
        results.append(ForceResult(
            kind=obs.kind,
            aT=float(aT),
            ratio=paired_ratio(hot, zero),
            coefficient=mean_stderr(coeff),
            shift=mean_stderr(coeff - coeff_zero),
        ))
    return results


def sweep(ensemble: LoopEnsemble, geometry, aT_values: Sequence[float],
          n_xi: int = DEFAULT_N_XI, trunc_eps: float | None = None,
          workers: int = 1) -> list[ForceResult]:
    """Force ratios for every ``aT`` from one pass over the ensemble."""
    for aT in aT_values:
        if not aT >= 0:
            raise ValueError(f"aT values must be >= 0, got {aT}")
    if ensemble.count < 2:
        raise ValueError("need at least 2 loops for error estimates")
    config = geometry if isinstance(geometry, GeometryConfig) else GeometryConfig(geometry)
    obs = compute_observables(ensemble, [config], n_xi, workers)[config.kind]
    return results_from_observables(obs, aT_values, trunc_eps)


def force_ratio(ensemble: LoopEnsemble, geometry, params: ThermalParams,
                n_xi: int = DEFAULT_N_XI) -> ForceResult:
    return sweep(ensemble, geometry, [params.aT], n_xi, params.trunc_eps)[0]


def fit_power_law(aT: Sequence[float], shift: Sequence[MCEstimate]) -> tuple[float, float]:
    """Fit ``|shift| = C (aT)^alpha`` by weighted least squares in log space.

    Returns ``(C, alpha)``.
    """
    x = np.log(np.asarray(aT, dtype=np.float64))
    y = np.array([math.log(abs(s.mean)) for s in shift])
    rel_err = np.array([s.stderr / abs(s.mean) for s in shift])
    # polyfit weights are 1/sigma; sigma of log|shift| is the relative error
    w = 1.0 / rel_err if np.all(rel_err > 0) else None
    alpha, log_c = np.polyfit(x, y, 1, w=w)
    return math.exp(log_c), float(alpha)
