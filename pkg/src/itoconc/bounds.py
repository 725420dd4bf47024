"""Closed-form tail bounds for the running supremum of an Ito integral.

Every evaluator returns a :class:`BoundValue`. Values are carried in log
space because the bounds decay like ``exp(-x**2)`` and underflow double
precision long before the asymptotic regime becomes interesting.

The right-hand sides are reported as stated, so several of them exceed 1
near ``x = 0``; use :attr:`BoundValue.clamped` when comparing against a
probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import DomainError, FellerViolation, InvalidParameter

LN2 = math.log(2.0)
LN4 = math.log(4.0)

#: An increasing map ``[0, inf) -> [1, inf)``. It may return a plain float or
#: any object exposing ``v`` and ``log_v`` (for example a ``VSolution``).
VFunction = Callable[[float], Union[float, "object"]]


@dataclass(frozen=True)
class BoundParams:
    """Constants parameterising the bound families.

    ``sigma_bar`` is the L2 size of the dominating integrand; for negative
    ``alpha`` it holds the generalised moment (the ``2 - 2*alpha`` power
    version). ``c`` bounds the integrated squared Malliavin derivative.
    """

    sigma_bar: float
    c: float
    alpha: float = 0.0
    T: float = 1.0

    def __post_init__(self):
        for name in ("sigma_bar", "c", "alpha", "T"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParameter(f"{name} must be finite")
        if self.sigma_bar <= 0:
            raise InvalidParameter(f"sigma_bar must be positive, got {self.sigma_bar}")
        if self.c < 0:
            raise InvalidParameter(f"c must be nonnegative, got {self.c}")
        if self.alpha > 1:
            raise InvalidParameter(f"alpha must be <= 1, got {self.alpha}")
        if self.T <= 0:
            raise InvalidParameter(f"T must be positive, got {self.T}")


@dataclass(frozen=True)
class BoundValue:
    """A bound value stored through its logarithm."""

    log_raw: float

    @property
    def raw(self) -> float:
        return math.exp(self.log_raw)

    @property
    def clamped(self) -> float:
        return 1.0 if self.log_raw >= 0.0 else math.exp(self.log_raw)

    def __float__(self):
        return self.raw


def _check_x(x):
    x = float(x)
    if not x >= 0.0:
        raise DomainError(f"x must be nonnegative, got {x}")
    return x


def _require_positive_c(p: BoundParams, what: str):
    if p.c <= 0:
        raise InvalidParameter(f"{what} requires c > 0, got c={p.c}")


def _log_v(v: VFunction, x: float) -> float:
    """Evaluate ``log v(x)``, enforcing ``x >= v^{-1}(1)``."""
    val = v(x)
    log_v = getattr(val, "log_v", None)
    if log_v is None:
        val = float(val)
        if not val > 0:
            raise DomainError(f"v({x}) = {val} is not positive")
        log_v = math.log(val)
    # x >= v^{-1}(1) is the same as v(x) >= 1 for increasing v
    if log_v < 0.0:
        raise DomainError(f"x={x} lies below v^-1(1): v(x) < 1")
    return float(log_v)


def eval_gaussian_tail(x: float, M: float) -> BoundValue:
    """``exp(-x^2 / (2 M^2))``: the tail bound for a bounded quadratic variation."""
    x = _check_x(x)
    if not M > 0:
        raise InvalidParameter(f"M must be positive, got {M}")
    return BoundValue(-x * x / (2.0 * M * M))


def eval_decomposition(x: float, y: float, qv_tail: float) -> BoundValue:
    """Split bound ``exp(-x^2/(2y)) + P(int u^2 >= y)``.

    ``qv_tail`` is any upper bound the caller has for the quadratic-variation
    tail at level ``y``.
    """
    x = _check_x(x)
    if not y > 0:
        raise InvalidParameter(f"y must be positive, got {y}")
    if not 0.0 <= qv_tail <= 1.0:
        raise InvalidParameter(f"qv_tail must lie in [0, 1], got {qv_tail}")
    log_qv = math.log(qv_tail) if qv_tail > 0 else -math.inf
    return BoundValue(float(np.logaddexp(-x * x / (2.0 * y), log_qv)))


def _alpha0_exponent(x: float, sigma: float, c: float) -> float:
    denom = sigma + math.sqrt(sigma * sigma + 4.0 * math.sqrt(c) * x)
    return 2.0 * x * x / (denom * denom)


def eval_alpha0(x: float, p: BoundParams) -> BoundValue:
    """Bound for a Malliavin derivative bounded in L2 (alpha = 0).

    At ``c = 0`` this is ``2 exp(-x^2 / (2 sigma_bar^2))``.
    """
    x = _check_x(x)
    if p.alpha != 0:
        raise InvalidParameter(f"eval_alpha0 requires alpha = 0, got {p.alpha}")
    return BoundValue(LN2 - _alpha0_exponent(x, p.sigma_bar, p.c))


def _lt1_second_exponent(log_v: float, scale2: float, c: float, alpha: float) -> float:
    # scale2 * (v^((1-a)/2) - 1)^2 / (2 c (1-a)^2), written with expm1 for v near 1
    gap = math.expm1(0.5 * (1.0 - alpha) * log_v)
    return scale2 * gap * gap / (2.0 * c * (1.0 - alpha) ** 2)


def eval_general_lt1(x: float, p: BoundParams, v: VFunction) -> BoundValue:
    """Two-term bound for ``0 <= alpha < 1`` and an arbitrary increasing ``v``."""
    x = _check_x(x)
    if not 0.0 <= p.alpha < 1.0:
        raise InvalidParameter(f"alpha must lie in [0, 1), got {p.alpha}")
    _require_positive_c(p, "eval_general_lt1")
    log_v = _log_v(v, x)
    s = p.sigma_bar
    e1 = x * x / (2.0 * s * s) * math.exp(-log_v)
    e2 = _lt1_second_exponent(log_v, s ** (2.0 - 2.0 * p.alpha), p.c, p.alpha)
    return BoundValue(float(np.logaddexp(-e1, -e2)))


def eval_general_eq1(x: float, p: BoundParams, v: VFunction) -> BoundValue:
    """Two-term bound for ``alpha = 1``."""
    x = _check_x(x)
    if p.alpha != 1:
        raise InvalidParameter(f"eval_general_eq1 requires alpha = 1, got {p.alpha}")
    _require_positive_c(p, "eval_general_eq1")
    log_v = _log_v(v, x)
    s = p.sigma_bar
    e1 = x * x / (2.0 * s * s) * math.exp(-log_v)
    e2 = log_v * log_v / (8.0 * p.c)
    return BoundValue(float(np.logaddexp(-e1, -e2)))


def eval_explicit_lt1(x: float, p: BoundParams) -> BoundValue:
    """Explicit bound for ``0 <= alpha < 1``; decays like ``exp(-x^((2-2a)/(2-a)))``."""
    x = _check_x(x)
    a = p.alpha
    if not 0.0 <= a < 1.0:
        raise InvalidParameter(f"alpha must lie in [0, 1), got {a}")
    _require_positive_c(p, "eval_explicit_lt1")
    inner = p.sigma_bar ** (1.0 - a) + (p.c * (1.0 - a) ** 2 * x * x) ** ((1.0 - a) / (4.0 - 2.0 * a))
    log_denom = (2.0 / (1.0 - a)) * math.log(inner)
    return BoundValue(LN2 - 0.5 * x * x * math.exp(-log_denom))


def eval_explicit_eq1(x: float, p: BoundParams) -> BoundValue:
    """Explicit bound for ``alpha = 1``; decays like ``exp(-ln^2 x / (2c))``."""
    x = _check_x(x)
    if p.alpha != 1:
        raise InvalidParameter(f"eval_explicit_eq1 requires alpha = 1, got {p.alpha}")
    _require_positive_c(p, "eval_explicit_eq1")
    rc = math.sqrt(p.c)
    y = rc * x / p.sigma_bar
    ln_ye = math.log(y + math.e)
    e1 = (x * ln_ye) ** 2 / (2.0 * (rc * x + p.sigma_bar) ** 2)
    e2 = (math.log1p(y) - math.log(ln_ye)) ** 2 / (2.0 * p.c)
    return BoundValue(float(np.logaddexp(-e1, -e2)))


def eval_neg_alpha(x: float, p: BoundParams, v: VFunction) -> BoundValue:
    """Two-term bound for ``alpha < 0``; ``p.sigma_bar`` is the generalised moment."""
    x = _check_x(x)
    a = p.alpha
    if not a < 0:
        raise InvalidParameter(f"eval_neg_alpha requires alpha < 0, got {a}")
    _require_positive_c(p, "eval_neg_alpha")
    log_v = _log_v(v, x)
    s = p.sigma_bar
    log_scale = (2.0 / (1.0 - a)) * math.log(s) - (a / (1.0 - a)) * math.log(p.T) + log_v
    e1 = 0.5 * x * x * math.exp(-log_scale)
    e2 = _lt1_second_exponent(log_v, s * s, p.c, a)
    return BoundValue(float(np.logaddexp(-e1, -e2)))


def eval_explicit_neg_alpha(x: float, p: BoundParams) -> BoundValue:
    """Explicit bound for ``alpha < 0``."""
    x = _check_x(x)
    a = p.alpha
    if not a < 0:
        raise InvalidParameter(f"eval_explicit_neg_alpha requires alpha < 0, got {a}")
    _require_positive_c(p, "eval_explicit_neg_alpha")
    T = p.T
    inner = (p.sigma_bar * T ** (-a / (4.0 - 2.0 * a))
             + (p.c * (1.0 - a) ** 2 * x * x) ** ((1.0 - a) / (4.0 - 2.0 * a)))
    log_denom = (-a / (2.0 - a)) * math.log(T) + (2.0 / (1.0 - a)) * math.log(inner)
    return BoundValue(LN2 - 0.5 * x * x * math.exp(-log_denom))


def eval_gaussian_functional(x: float, sigma: float, c: float) -> BoundValue:
    """Two-sided bound on ``P(|F - E F| > x)`` for ``F = f(Z)`` with bounded Hessian."""
    x = _check_x(x)
    if not sigma > 0:
        raise InvalidParameter(f"sigma must be positive, got {sigma}")
    if not c > 0:
        raise InvalidParameter(f"c must be positive, got {c}")
    return BoundValue(LN4 - _alpha0_exponent(x, sigma, c))


def eval_double_integral(x: float, g_norm: float) -> BoundValue:
    """Bound on the running supremum of a double Wiener-Ito integral.

    ``g_norm`` is the L2 norm of the symmetric kernel over the square.
    """
    x = _check_x(x)
    if not g_norm > 0:
        raise InvalidParameter(f"g_norm must be positive, got {g_norm}")
    denom = g_norm + math.sqrt(g_norm * g_norm + math.sqrt(8.0) * g_norm * x)
    return BoundValue(LN2 - x * x / (denom * denom))


def check_feller(a: float, b: float, sigma: float, x0: float, T: float):
    for name, val in (("a", a), ("b", b), ("sigma", sigma), ("x0", x0), ("T", T)):
        if not (math.isfinite(val) and val > 0):
            raise InvalidParameter(f"CIR parameter {name} must be positive, got {val}")
    if not 2.0 * a > sigma * sigma:
        raise FellerViolation(f"Feller condition 2a > sigma^2 fails: 2a={2 * a}, sigma^2={sigma * sigma}")


def eval_cir(x: float, a: float, b: float, sigma: float, x0: float, T: float) -> BoundValue:
    """Bound on ``P(sup_t e^{bt}(X_t - E X_t) > x)`` for a CIR process."""
    x = _check_x(x)
    check_feller(a, b, sigma, x0, T)
    g = math.expm1(b * T)
    s2 = sigma * sigma * (x0 * g / b + a * g * g / (2.0 * b * b))
    s = math.sqrt(s2)
    denom = s + math.sqrt(s2 + math.sqrt(2.0) * sigma * sigma / b * g * x)
    return BoundValue(LN2 - 2.0 * x * x / (denom * denom))


def asymptotic_rate(p: BoundParams) -> float:
    """Limit of ``ln(bound) / x^((2-2a)/(2-a))``, or of ``ln(bound) / ln^2 x`` when alpha = 1."""
    _require_positive_c(p, "asymptotic_rate")
    a = p.alpha
    if a == 1:
        return -1.0 / (2.0 * p.c)
    denom = 2.0 * p.c ** (1.0 / (2.0 - a)) * (1.0 - a) ** (2.0 / (2.0 - a))
    if a < 0:
        denom *= p.T ** (-a / (2.0 - a))
    return -1.0 / denom


def rate_exponent(alpha: float) -> float:
    """Power of x in the asymptotic decay, ``(2 - 2a) / (2 - a)``."""
    return (2.0 - 2.0 * alpha) / (2.0 - alpha)
