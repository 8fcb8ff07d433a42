"""Closed-form benchmarks for the thermal Casimir force of a Dirichlet scalar.

All forces are dimensionless: ``F a^4 / A`` for parallel plates (area ``A``)
and ``F a^3 / L`` for the perpendicular half-plate (edge length ``L``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

ZETA3 = float(special.zeta(3.0))
PARALLEL_ZERO_T = -math.pi**2 / 480.0

# CODATA 2018; only used to convert laboratory units to aT
BOLTZMANN = 1.380649e-23  # J/K, exact
HBAR = 1.054571817e-34  # J s
SPEED_OF_LIGHT = 2.99792458e8  # m/s, exact


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SeriesControl:
    rel_tol: float = 1e-12
    max_terms: int = 1_000_000

    def __post_init__(self):
        if not (0 < self.rel_tol < 1e-6):
            raise ValueError(f"rel_tol must lie in (0, 1e-6), got {self.rel_tol}")
        if self.max_terms < 1:
            raise ValueError(f"max_terms must be positive, got {self.max_terms}")


def _hyperbolic_parts(x: np.ndarray):
    """coth(x) - 1, x csch^2(x) and x^2 csch^2(x) coth(x), evaluated via e^-2x."""
    q = np.exp(-2.0 * x)
    one_minus_q = -np.expm1(-2.0 * x)
    csch2 = 4.0 * q / one_minus_q**2
    coth = (1.0 + q) / one_minus_q
    return 2.0 * q / one_minus_q, x * csch2, x * x * csch2 * coth


def _summed(term, t: float, ctrl: "SeriesControl") -> float:
    # sum_m term(2 pi m t) / m^3 for terms decaying like exp(-2x)
    total = 0.0
    chunk = 4096
    m0 = 1
    while True:
        m = np.arange(m0, m0 + chunk, dtype=np.float64)
        x = 2.0 * math.pi * m * t
        terms = term(x) / m**3
        total += math.fsum(terms)
        m0 += chunk
        if x[-1] > 1.0 and terms[-1] <= ctrl.rel_tol * 1e-3 * abs(total):
            return total
        if m0 > ctrl.max_terms:
            raise ConvergenceError(f"series for aT={t} not converged within {ctrl.max_terms} terms")


def parallel_force_analytic(aT: float, ctrl: SeriesControl = SeriesControl()) -> float:
    """Dimensionless parallel-plate force ``F a^4 / A`` at temperature ``aT``.

    The a-derivative of the Matsubara-resummed free energy is taken term by
    term:

        F a^4 / A = -pi^2 t sum_m [g(x) + x^2 csch^2(x) coth(x)] / (2 pi m)^3

    with t = aT, x = 2 pi m t and g(x) = coth x + x csch^2 x.  The constant
    part of g sums to zeta(3); what remains decays like exp(-2x).
    """
    if aT < 0 or math.isnan(aT):
        raise ValueError(f"aT must be >= 0, got {aT}")
    if aT == 0:
        return PARALLEL_ZERO_T
    t = float(aT)
    total = ZETA3 + _summed(lambda x: sum(_hyperbolic_parts(x)), t, ctrl)
    return -math.pi**2 * t * total / (2.0 * math.pi) ** 3


def parallel_free_energy_bracket(a: float, T: float, ctrl: SeriesControl = SeriesControl()) -> float:
    """``(T/a^2) sum_m (coth x + x csch^2 x)/(2 pi m)^3`` with x = 2 pi m a T.

    The parallel-plate force per area is ``(pi^2/2)`` times its a-derivative;
    exposed so the differentiated series can be checked numerically.
    """
    t = a * T
    g_minus_one = _summed(lambda x: sum(_hyperbolic_parts(x)[:2]), t, ctrl)
    return T / a**2 * (ZETA3 + g_minus_one) / (2.0 * math.pi) ** 3


def parallel_ratio_analytic(aT: float, ctrl: SeriesControl = SeriesControl()) -> float:
    return parallel_force_analytic(aT, ctrl) / PARALLEL_ZERO_T


def parallel_leading_correction(aT: float) -> float:
    """Low-temperature shift of ``F a^4 / A``: -(pi^2/90) (aT)^4."""
    if aT < 0:
        raise ValueError(f"aT must be >= 0, got {aT}")
    return -math.pi**2 / 90.0 * aT**4


def perpendicular_leading_correction(aT: float) -> float:
    """Low-temperature shift of ``F a^3 / L``: -(zeta(3)/(4 pi)) (aT)^3."""
    if aT < 0:
        raise ValueError(f"aT must be >= 0, got {aT}")
    return -ZETA3 / (4.0 * math.pi) * aT**3


def room_temperature_aT(separation_m: float, temperature_K: float) -> float:
    """Separation times temperature in natural units, ``a k_B T / (hbar c)``."""
    if separation_m <= 0 or temperature_K <= 0:
        raise ValueError("separation and temperature must be positive")
    return separation_m * BOLTZMANN * temperature_K / (HBAR * SPEED_OF_LIGHT)
