"""Constants ``c`` and ``sigma_bar`` for the structured integrand families.

For integrands ``f(s, X_s)`` with ``|D_r X_s| <= k(s, r)`` and a growth
condition ``|d f / dx| <= L |f|^alpha`` the Malliavin constant is an
integral of ``k^2`` over the triangle ``0 <= r <= s <= T``; which integral
depends on the sign and size of ``alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn
from scipy.stats import norm

from .bounds import check_feller
from .errors import InvalidKernel, InvalidParameter, SimulationFailure
from .simulate import GridSpec, PathEnsemble, brownian_from_increments, map_paths

OUTER_PANELS = 10_000
SUP_GRID = 10_000


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-12, max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""
    if a == b:
        return 0.0
    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _asr(f, a, b, fa, fm, fb, whole, tol, max_depth)


def _asr(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if depth <= 0 or abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    return (_asr(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + _asr(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))


def composite_simpson(values: np.ndarray, h: float) -> float:
    """Composite Simpson rule on an odd number of equally spaced samples."""
    n = values.size - 1
    if n < 2 or n % 2:
        raise ValueError("composite Simpson needs an even number of panels")
    return h / 3.0 * (values[0] + values[-1] + 4.0 * values[1:-1:2].sum() + 2.0 * values[2:-1:2].sum())


@dataclass(frozen=True)
class KernelBound:
    """Deterministic bound ``k(s, r)`` on ``|D_r X_s|`` for ``r <= s``.

    ``inner`` (``s -> int_0^s k^2(s, r) dr``) and ``total`` (``T -> double
    integral``) are optional closed forms; without them the integrals are
    computed by quadrature.
    """

    k: Callable[[float, float], float]
    inner: Optional[Callable[[float], float]] = None
    total: Optional[Callable[[float], float]] = None

    @classmethod
    def constant(cls, value: float = 1.0) -> "KernelBound":
        if value < 0:
            raise InvalidKernel(f"kernel bound must be nonnegative, got {value}")
        v2 = value * value
        return cls(lambda s, r: value, inner=lambda s: v2 * s, total=lambda T: 0.5 * v2 * T * T)

    @classmethod
    def cir(cls, b: float, sigma: float) -> "KernelBound":
        """Bound for ``D_r(sigma e^{bs} sqrt(X_s))`` from the square-root derivative."""
        return cls(lambda s, r: 0.5 * sigma * sigma * math.exp(b * s - 0.5 * b * (s - r)))

    def inner_integral(self, s: float) -> float:
        if self.inner is not None:
            return float(self.inner(s))
        return adaptive_simpson(lambda r: self._k2(s, r), 0.0, s)

    def _k2(self, s: float, r: float) -> float:
        val = self.k(s, r)
        if not val >= 0:
            raise InvalidKernel(f"kernel bound k({s}, {r}) = {val} is not a nonnegative number")
        return val * val

    def inner_on_grid(self, T: float, n: int) -> np.ndarray:
        s = np.linspace(0.0, T, n + 1)
        vals = np.array([self.inner_integral(float(si)) for si in s])
        if not np.all(np.isfinite(vals)):
            raise InvalidKernel("inner integral of k^2 is not finite")
        return vals

    def triangle_integral(self, T: float) -> float:
        if self.total is not None:
            return float(self.total(T))
        val = composite_simpson(self.inner_on_grid(T, OUTER_PANELS), T / OUTER_PANELS)
        if not math.isfinite(val):
            raise InvalidKernel("double integral of k^2 diverges")
        return val


@dataclass(frozen=True)
class GrowthSpec:
    """Growth condition ``|df/dx| <= L |f|^alpha``."""

    L: float
    alpha: float

    def __post_init__(self):
        if not self.L > 0:
            raise InvalidParameter(f"L must be positive, got {self.L}")
        if self.alpha > 1:
            raise InvalidParameter(f"alpha must be <= 1, got {self.alpha}")


@dataclass(frozen=True)
class HessianBounds:
    """Symmetric matrix of suprema of the second derivatives."""

    lam: np.ndarray

    def __post_init__(self):
        lam = np.atleast_2d(np.asarray(self.lam, dtype=float))
        if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
            raise InvalidParameter("Hessian bounds must be a square matrix")
        if not np.all(np.isfinite(lam)) or np.any(lam < 0):
            raise InvalidParameter("Hessian bounds must be finite and nonnegative")
        if not np.array_equal(lam, lam.T):
            raise InvalidParameter("Hessian bounds must be symmetric")
        object.__setattr__(self, "lam", lam)


def c_neg_alpha(k: KernelBound, g: GrowthSpec, T: float) -> float:
    """``L^2`` times the integral of ``k^2`` over the triangle (alpha < 0)."""
    if not g.alpha < 0:
        raise InvalidParameter(f"c_neg_alpha requires alpha < 0, got {g.alpha}")
    return g.L ** 2 * k.triangle_integral(T)


def c_mid_alpha(k: KernelBound, g: GrowthSpec, T: float) -> float:
    """``L^2 (int_0^T (int_0^s k^2 dr)^(1/(1-alpha)) ds)^(1-alpha)`` for 0 <= alpha < 1."""
    a = g.alpha
    if not 0.0 <= a < 1.0:
        raise InvalidParameter(f"c_mid_alpha requires 0 <= alpha < 1, got {a}")
    if a == 0.0 and k.total is not None:
        return g.L ** 2 * k.triangle_integral(T)
    inner = k.inner_on_grid(T, OUTER_PANELS)
    outer = composite_simpson(np.maximum(inner, 0.0) ** (1.0 / (1.0 - a)), T / OUTER_PANELS)
    return g.L ** 2 * outer ** (1.0 - a)


def c_alpha1(k: KernelBound, g: GrowthSpec, T: float) -> float:
    """``L^2 sup_s int_0^s k^2 dr`` (alpha = 1), sup over a grid plus local refinement."""
    if g.alpha != 1:
        raise InvalidParameter(f"c_alpha1 requires alpha = 1, got {g.alpha}")
    vals = k.inner_on_grid(T, SUP_GRID)
    i = int(np.argmax(vals))
    h = T / SUP_GRID
    lo, hi = max(0.0, (i - 1) * h), min(T, (i + 1) * h)
    fine = np.array([k.inner_integral(float(s)) for s in np.linspace(lo, hi, 21)])
    return g.L ** 2 * max(float(vals[i]), float(fine.max()))


def c_gaussian_functional(h: HessianBounds) -> float:
    """Strict lower-triangle sum of squares plus half the diagonal sum of squares."""
    lam2 = h.lam ** 2
    return float(np.tril(lam2, k=-1).sum() + 0.5 * np.trace(lam2))


# -- sigma_bar ------------------------------------------------------------------

class PowerTimeIntegral:
    """Per-path ``int_0^T |ubar_s|^p ds`` by the trapezoid rule."""

    def __init__(self, integrand, exponent: float):
        self.integrand = integrand
        self.exponent = float(exponent)

    def __call__(self, grid: GridSpec, dB: np.ndarray, first: int):
        B = brownian_from_increments(dB)
        u = np.broadcast_to(np.asarray(self.integrand(grid.times, B), dtype=float), B.shape)
        return {"power": trapezoid_power(u, self.exponent, grid.dt, first)}


def trapezoid_power(u: np.ndarray, exponent: float, dt: float, first: int = 0) -> np.ndarray:
    y = np.abs(u) ** exponent
    out = dt * (y.sum(axis=1) - 0.5 * (y[:, 0] + y[:, -1]))
    bad = ~np.isfinite(out)
    if bad.any():
        row = int(np.argmax(bad))
        raise SimulationFailure(f"non-finite sigma_bar sample on path {first + row}", first + row)
    return out


def mean_upper_cl(samples: np.ndarray, confidence: float) -> Tuple[float, float]:
    """Sample mean and its one-sided upper confidence limit (normal approximation)."""
    samples = np.asarray(samples, dtype=float)
    est = float(samples.mean())
    if samples.size < 2 or np.all(samples == samples[0]):
        return est, est
    se = float(samples.std(ddof=1)) / math.sqrt(samples.size)
    return est, est + float(norm.ppf(confidence)) * se


def sigma_bar_mc(ensemble: PathEnsemble, integrand, exponent: float = 2.0,
                 confidence: float = 0.99, workers: int = 1) -> Tuple[float, float]:
    """Monte Carlo estimate of ``int_0^T E|ubar_s|^p ds`` and its upper confidence limit.

    Returns the squared quantity (``sigma_bar**2``); callers take the root.
    """
    if not exponent > 0:
        raise InvalidParameter(f"exponent must be positive, got {exponent}")
    if not 0.5 < confidence < 1.0:
        raise InvalidParameter(f"confidence must lie in (0.5, 1), got {confidence}")
    powers = map_paths(ensemble, PowerTimeIntegral(integrand, exponent), workers)["power"]
    return mean_upper_cl(powers, confidence)


# -- closed forms for the registered scenarios ---------------------------------

def abs_normal_moment(p: float) -> float:
    """``E|Z|^p`` for a standard normal ``Z``."""
    return 2.0 ** (p / 2.0) * gamma_fn((p + 1.0) / 2.0) / math.sqrt(math.pi)


def running_max_power_integral(p: float, T: float) -> float:
    """``int_0^T E[(max_{u<=s} B_u)^p] ds``; the running max at s is distributed as ``|B_s|``."""
    return abs_normal_moment(p) * T ** (p / 2.0 + 1.0) / (p / 2.0 + 1.0)


def running_max_exp_integral(T: float, lam: float = 2.0) -> float:
    """``int_0^T E[exp(lam max_{u<=s} B_u)] ds`` using ``E e^{lam |Z| sqrt(s)} = 2 e^{lam^2 s/2} Phi(lam sqrt(s))``."""
    def f(s):
        return 2.0 * math.exp(0.5 * lam * lam * s) * norm.cdf(lam * math.sqrt(s))
    val, _ = integrate.quad(f, 0.0, T, epsabs=0.0, epsrel=1e-12)
    return val


def running_max_shifted_square_integral(T: float, eps: float) -> float:
    """``int_0^T E[(max_{u<=s} B_u + eps)^2] ds``."""
    return 0.5 * T * T + 2.0 * eps * math.sqrt(2.0 / math.pi) * (2.0 / 3.0) * T ** 1.5 + eps * eps * T


def cir_constants(a: float, b: float, sigma: float, x0: float, T: float) -> Tuple[float, float]:
    """``(sigma_bar_T**2, c)`` for ``ubar_s = sigma e^{bs} sqrt(X_s)``."""
    check_feller(a, b, sigma, x0, T)
    g = math.expm1(b * T)
    s2 = sigma * sigma * (x0 * g / b + a * g * g / (2.0 * b * b))
    c = sigma ** 4 * g * g / (8.0 * b * b)
    return s2, c
