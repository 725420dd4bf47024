"""Optimal auxiliary function v(x) for the two-term bounds.

The optimal v balances the two exponents of the two-term bound. Both defining
equations are rearranged into the form ``F(v) = target`` with ``F``
strictly increasing from 0 at ``v = 1``::

    0 <= alpha < 1:  sqrt(v) * (v^((1-alpha)/2) - 1) = x sqrt(c) (1-alpha) / sigma^(2-alpha)
    alpha = 1:       sqrt(v) * ln(v)                 = 2 sqrt(c) x / sigma

and solved by bisection in ``w = ln v``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .bounds import BoundParams
from .errors import DomainError, InvalidParameter, SolverFailure

MAX_ITER = 400
LOG_V_TOL = 1e-13


@dataclass(frozen=True)
class VSolution:
    x: float
    v: float
    residual: float
    log_v: float


def _lhs_lt1(w: float, alpha: float) -> float:
    if w > 1400.0:
        return math.inf
    return math.exp(0.5 * w) * math.expm1(0.5 * (1.0 - alpha) * w)


def _lhs_eq1(w: float) -> float:
    if w > 1400.0:
        return math.inf
    return math.exp(0.5 * w) * w


def _bisect_log_v(lhs: Callable[[float], float], target: float) -> float:
    """Smallest-width bracket root of ``lhs(w) = target`` on ``w >= 0``."""
    if target == 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    it = 0
    while lhs(hi) < target:
        lo, hi = hi, 2.0 * hi
        it += 1
        if it > MAX_ITER or math.isinf(hi):
            raise SolverFailure(f"could not bracket target {target}")
    while hi - lo > LOG_V_TOL:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if lhs(mid) < target:
            lo = mid
        else:
            hi = mid
        it += 1
        if it > MAX_ITER:
            raise SolverFailure(f"bisection did not converge for target {target}")
    return 0.5 * (lo + hi)


def _exp(w: float) -> float:
    # v itself may overflow for astronomically large x; log_v stays exact
    return math.exp(w) if w < 709.0 else math.inf


def _check(x: float, p: BoundParams) -> float:
    x = float(x)
    if not x >= 0.0 or math.isinf(x):
        raise DomainError(f"x must be finite and nonnegative, got {x}")
    if p.c <= 0:
        raise InvalidParameter(f"solving for v requires c > 0, got {p.c}")
    return x


def lt1_target(x: float, p: BoundParams) -> float:
    return x * math.sqrt(p.c) * (1.0 - p.alpha) / p.sigma_bar ** (2.0 - p.alpha)


def eq1_target(x: float, p: BoundParams) -> float:
    return 2.0 * math.sqrt(p.c) * x / p.sigma_bar


def solve_v_lt1(x: float, p: BoundParams) -> VSolution:
    """Balancing v for ``0 <= alpha < 1``."""
    x = _check(x, p)
    if not 0.0 <= p.alpha < 1.0:
        raise InvalidParameter(f"alpha must lie in [0, 1), got {p.alpha}")
    target = lt1_target(x, p)
    w = _bisect_log_v(lambda w: _lhs_lt1(w, p.alpha), target)
    return VSolution(x, _exp(w), abs(_lhs_lt1(w, p.alpha) - target), w)


def solve_v_eq1(x: float, p: BoundParams) -> VSolution:
    """Balancing v for ``alpha = 1``."""
    x = _check(x, p)
    if p.alpha != 1:
        raise InvalidParameter(f"solve_v_eq1 requires alpha = 1, got {p.alpha}")
    target = eq1_target(x, p)
    w = _bisect_log_v(_lhs_eq1, target)
    return VSolution(x, _exp(w), abs(_lhs_eq1(w) - target), w)


def closed_form_v_alpha0(x: float, p: BoundParams) -> VSolution:
    """Explicit balancing v when alpha = 0."""
    x = _check(x, p)
    if p.alpha != 0:
        raise InvalidParameter(f"closed form requires alpha = 0, got {p.alpha}")
    s = p.sigma_bar
    eps = 4.0 * math.sqrt(p.c) * x
    root = math.sqrt(s * s + eps)
    # (s + root) / (2 s) = 1 + (root - s) / (2 s), and root - s = eps / (root + s)
    w = 2.0 * math.log1p(eps / (root + s) / (2.0 * s))
    v = (s + root) ** 2 / (4.0 * s * s)
    return VSolution(x, v, abs(_lhs_lt1(w, 0.0) - lt1_target(x, p)), w)


class OptimalV:
    """Callable ``x -> VSolution`` picking the solver for the regime of ``p``.

    Suitable as the ``v`` argument of the two-term evaluators in
    :mod:`itoconc.bounds`.
    """

    def __init__(self, p: BoundParams, closed_form: bool = True):
        if p.alpha < 0:
            raise InvalidParameter("no balancing equation is provided for alpha < 0")
        self.p = p
        if p.alpha == 1:
            self._solve = solve_v_eq1
        elif p.alpha == 0 and closed_form:
            self._solve = closed_form_v_alpha0
        else:
            self._solve = solve_v_lt1

    def __call__(self, x: float) -> VSolution:
        return self._solve(x, self.p)
