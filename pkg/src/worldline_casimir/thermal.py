"""Winding sums and propertime kernels at finite temperature.

With ``b = beta / a`` the per-loop propertime integrals are

    I_3(l, b)   = int_{1/l^2}^inf dT T^-3   sum_n exp(-n^2 b^2 / (4T))
    I_5/2(l, b) = int_{1/l^2}^inf dT T^-5/2 sum_n exp(-n^2 b^2 / (4T))

and both are done in closed form.  Substituting u = 1/T gives the direct
series ``l^(2s)/s + 2 sum_n gamma(s, c_n l^2) / c_n^s`` (s = 2 and 3/2,
c_n = n^2 b^2 / 4).  For small ``b*l`` that series converges slowly, so the
winding sum is Jacobi-transformed under the integral instead, which leaves a
rapidly convergent series of exponential integrals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

SQRT_PI = math.sqrt(math.pi)
DEFAULT_TRUNC_EPS = 1e-14

# switch from the direct to the dual series where both need equally many terms
_DUAL_BELOW = 2.0 * SQRT_PI
_SERIES_BELOW = 1.0


@dataclass(frozen=True)
class ThermalParams:
    """Inverse temperature in units of the separation, ``b = 1/(aT)``.

    ``b = inf`` is zero temperature.
    """

    b: float
    trunc_eps: float = DEFAULT_TRUNC_EPS

    def __post_init__(self):
        if not (self.b > 0):
            raise ValueError(f"b must be positive (or inf), got {self.b}")
        if not (0 < self.trunc_eps < 1e-6):
            raise ValueError(f"trunc_eps must lie in (0, 1e-6), got {self.trunc_eps}")

    @classmethod
    def from_aT(cls, aT: float, trunc_eps: float = DEFAULT_TRUNC_EPS) -> "ThermalParams":
        if aT < 0 or math.isnan(aT):
            raise ValueError(f"aT must be >= 0, got {aT}")
        return cls(math.inf if aT == 0 else 1.0 / aT, trunc_eps)

    @property
    def aT(self) -> float:
        return 0.0 if math.isinf(self.b) else 1.0 / self.b

    @property
    def is_zero_temperature(self) -> bool:
        return math.isinf(self.b)


ZERO_TEMPERATURE = ThermalParams(math.inf)


def winding_sum(c: float, trunc_eps: float = DEFAULT_TRUNC_EPS) -> float:
    """sum over all integers n of exp(-c n^2); Jacobi-transformed for c < 1."""
    if not (c > 0):
        raise ValueError(f"c must be positive, got {c}")
    if math.isinf(c):
        return 1.0
    if c >= 1.0:
        return _theta_direct(c, trunc_eps)
    return math.sqrt(math.pi / c) * _theta_direct(math.pi**2 / c, trunc_eps)


def _theta_direct(c: float, trunc_eps: float) -> float:
    total, n = 1.0, 1
    while True:
        term = 2.0 * math.exp(-c * n * n)
        total += term
        if term < trunc_eps * total:
            return total
        n += 1


def _series_lower_gamma(s: float, x: np.ndarray) -> np.ndarray:
    # gamma(s, x) = x^s e^-x sum_k x^k / (s (s+1) ... (s+k)); 30 terms reach 1e-17 for x < 1
    term = np.full_like(x, 1.0 / s)
    acc = term.copy()
    for k in range(1, 30):
        term = term * x / (s + k)
        acc += term
    return x**s * np.exp(-x) * acc


def lower_gamma_2(x):
    """gamma(2, x) = 1 - exp(-x) (1 + x)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    small = x < _SERIES_BELOW
    out[small] = _series_lower_gamma(2.0, x[small])
    xl = x[~small]
    out[~small] = 1.0 - np.exp(-xl) * (1.0 + xl)
    return out if out.ndim else out[()]


def lower_gamma_3_2(x):
    """gamma(3/2, x) = (sqrt(pi)/2) erf(sqrt(x)) - sqrt(x) exp(-x)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    small = x < _SERIES_BELOW
    out[small] = _series_lower_gamma(1.5, x[small])
    xl = x[~small]
    r = np.sqrt(xl)
    out[~small] = 0.5 * SQRT_PI * special.erf(r) - r * np.exp(-xl)
    return out if out.ndim else out[()]


def g3(c, l):
    """int_{1/l^2}^inf dT T^-3 exp(-c/T) = (1 - exp(-c l^2)(1 + c l^2)) / c^2."""
    c = np.asarray(c, dtype=np.float64)
    l = np.asarray(l, dtype=np.float64)
    return lower_gamma_2(c * l * l) / (c * c)


def g5_2(c, l):
    """int_{1/l^2}^inf dT T^-5/2 exp(-c/T) = gamma(3/2, c l^2) / c^(3/2)."""
    c = np.asarray(c, dtype=np.float64)
    l = np.asarray(l, dtype=np.float64)
    return lower_gamma_3_2(c * l * l) / c**1.5


def _exp_integral_5_2(z: np.ndarray) -> np.ndarray:
    # E_{1/2}(z) = sqrt(pi/z) erfc(sqrt z), then E_{p+1} = (e^-z - z E_p) / p
    r = np.sqrt(z)
    e32 = 2.0 * np.exp(-z) * (1.0 - SQRT_PI * r * special.erfcx(r))
    return (2.0 / 3.0) * (np.exp(-z) - z * e32)


class _Kernel:
    """Closed-form ``int_{1/l^2}^inf dT T^-(s+1) sum_n exp(-n^2 b^2/(4T))``."""

    def __init__(self, s: float, lower_gamma, dual_integral):
        self.s = s
        self.lower_gamma = lower_gamma
        self.dual_integral = dual_integral

    def zero_temperature(self, l: np.ndarray) -> np.ndarray:
        return l ** (2 * self.s) / self.s

    def __call__(self, l, params: ThermalParams):
        l = np.asarray(l, dtype=np.float64)
        if np.any(l < 0) or np.any(np.isnan(l)):
            raise ValueError("extents must be nonnegative")
        flat = l.ravel()
        out = np.zeros_like(flat)
        pos = flat > 0
        if params.is_zero_temperature:
            out[pos] = self.zero_temperature(flat[pos])
        else:
            bl = params.b * flat
            direct = pos & (bl >= _DUAL_BELOW)
            dual = pos & (bl < _DUAL_BELOW)
            if direct.any():
                out[direct] = self._direct(flat[direct], params)
            if dual.any():
                out[dual] = self._dual(flat[dual], params)
        out = out.reshape(l.shape)
        return out if out.ndim else out[()]

    def _direct(self, l: np.ndarray, params: ThermalParams) -> np.ndarray:
        s = self.s
        q = 0.25 * params.b**2
        # beyond n0 the incomplete gamma equals Gamma(s) to within trunc_eps
        x_cut = special.gammainccinv(s, params.trunc_eps)
        n0 = np.ceil(np.sqrt(x_cut / q) / l)
        acc = np.zeros_like(l)
        ql2 = q * l * l
        for n in range(1, int(n0.max())):
            m = n < n0
            acc[m] += self.lower_gamma(n * n * ql2[m]) / n ** (2 * s)
        acc += special.gamma(s) * special.zeta(2 * s, n0)
        return self.zero_temperature(l) + 2.0 * acc / q**s

    def _dual(self, l: np.ndarray, params: ThermalParams) -> np.ndarray:
        s, b = self.s, params.b
        big_l = l * l
        z_cut = -math.log(params.trunc_eps) + 10.0
        k_max = np.floor(b * l * math.sqrt(z_cut) / (2.0 * math.pi))
        acc = big_l ** (s - 0.5) / (s - 0.5)
        for k in range(1, int(k_max.max()) + 1):
            m = k <= k_max
            a_k = (2.0 * math.pi * k / b) ** 2
            acc[m] += 2.0 * self.dual_integral(a_k, big_l[m])
        return (2.0 * SQRT_PI / b) * acc


def _dual_integral_parallel(a: float, big_l: np.ndarray) -> np.ndarray:
    # int_0^L u^(1/2) exp(-a/u) du
    return big_l**1.5 * _exp_integral_5_2(a / big_l)


def _dual_integral_perpendicular(a: float, big_l: np.ndarray) -> np.ndarray:
    # int_0^L exp(-a/u) du
    return big_l * special.expn(2, a / big_l)


_PARALLEL = _Kernel(2.0, lower_gamma_2, _dual_integral_parallel)
_PERPENDICULAR = _Kernel(1.5, lower_gamma_3_2, _dual_integral_perpendicular)


def kernel_parallel(l, params: ThermalParams):
    """I_3(l, b); reduces to l^4/2 at zero temperature."""
    return _PARALLEL(l, params)


def kernel_perpendicular(l, params: ThermalParams):
    """I_5/2(l, b); reduces to (2/3) l^3 at zero temperature."""
    return _PERPENDICULAR(l, params)


def perp_loop_integrand(obs, params: ThermalParams) -> float:
    """Midpoint-rule xi integral of I_5/2(l(xi), b) for one loop."""
    from .geometry import PerpendicularObservable

    if not isinstance(obs, PerpendicularObservable):
        raise TypeError(f"expected a PerpendicularObservable, got {type(obs).__name__}")
    return float(perp_integrands(obs.l_of_xi[None, :], np.array([obs.dxi]), params)[0])


def perp_integrands(l_of_xi: np.ndarray, dxi: np.ndarray, params: ThermalParams) -> np.ndarray:
    """Batched :func:`perp_loop_integrand` over rows of ``l_of_xi``.

    Zero-extent nodes contribute nothing since the kernel vanishes at l = 0.
    """
    return kernel_perpendicular(l_of_xi, params).sum(axis=1) * dxi
