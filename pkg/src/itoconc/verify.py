"""Empirical tail estimates, exact binomial limits and bound certification."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import beta

from .bounds import BoundValue
from .errors import InvalidInput, InvalidParameter

K_MIN = 10

PASS, MARGINAL, FAIL, UNRESOLVED = "PASS", "MARGINAL", "FAIL", "UNRESOLVED"

CSV_COLUMNS = ("scenario", "x", "n", "k", "p_hat", "upper_cl", "bound_raw", "bound_clamped", "verdict")


def clopper_pearson_upper(k: int, n: int, confidence: float) -> float:
    """One-sided exact upper confidence limit for a binomial proportion."""
    if n <= 0 or not 0 <= k <= n:
        raise InvalidInput(f"need 0 <= k <= n and n > 0, got k={k}, n={n}")
    if k == n:
        return 1.0
    return float(beta.ppf(confidence, k + 1, n - k))


def clopper_pearson_lower(k: int, n: int, confidence: float) -> float:
    if n <= 0 or not 0 <= k <= n:
        raise InvalidInput(f"need 0 <= k <= n and n > 0, got k={k}, n={n}")
    if k == 0:
        return 0.0
    return float(beta.ppf(1.0 - confidence, k, n - k + 1))


@dataclass(frozen=True)
class TailEstimate:
    x: float
    n: int
    k: int
    p_hat: float
    upper_cl: float
    resolvable: bool


def _check_confidence(confidence):
    if not 0.5 < confidence < 1.0:
        raise InvalidParameter(f"confidence must lie in (0.5, 1), got {confidence}")


def estimate_tail(samples, x_grid: Sequence[float], confidence: float = 0.99,
                  k_min: int = K_MIN) -> List[TailEstimate]:
    """Estimate ``P(S > x)`` on each threshold with exact one-sided upper limits.

    Thresholds with fewer than ``k_min`` exceedances are marked unresolvable.
    """
    _check_confidence(confidence)
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    if s.size == 0:
        raise InvalidInput("no samples")
    if not np.all(np.isfinite(s)):
        raise InvalidInput("samples contain non-finite values")
    n = int(s.size)
    out = []
    for x in x_grid:
        k = n - int(np.searchsorted(s, x, side="right"))
        out.append(TailEstimate(float(x), n, k, k / n, clopper_pearson_upper(k, n, confidence), k >= k_min))
    return out


def auto_x_grid(samples, n_points: int = 25, k_min: int = K_MIN) -> List[float]:
    """Geometric grid from the sample median up to the highest resolvable threshold."""
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    if s.size == 0:
        raise InvalidInput("no samples")
    if n_points < 1:
        raise InvalidParameter(f"n_points must be positive, got {n_points}")
    lo = float(np.quantile(s, 0.5))
    n = s.size
    if n_points == 1 or s[0] == s[-1] or n <= k_min:
        return [lo]
    # highest x with at least k_min samples strictly above it
    kth_largest = s[n - k_min]
    below = s[s < kth_largest]
    hi = float(below[-1]) if below.size else lo
    if hi <= lo:
        return [lo]
    if lo > 0:
        grid = np.geomspace(lo, hi, n_points)
    else:
        grid = np.linspace(lo, hi, n_points)
    grid[0], grid[-1] = lo, hi
    return [float(v) for v in grid]


def verdict(est: TailEstimate, bound: BoundValue) -> str:
    b = bound.clamped
    if est.p_hat > b:
        return FAIL
    if not est.resolvable:
        return UNRESOLVED
    if est.upper_cl <= b:
        return PASS
    return MARGINAL


@dataclass
class ReportRow:
    x: float
    n: int
    k: int
    p_hat: float
    upper_cl: float
    resolvable: bool
    bound_raw: float
    bound_clamped: float
    verdict: str


@dataclass
class ScenarioReport:
    """Outcome of one certification run.

    ``timing`` holds wall-clock fields; everything else is a deterministic
    function of the configuration.
    """

    scenario: str
    seed: int
    confidence: float
    bound_family: str
    params: Dict[str, Any]
    provenance: Dict[str, Any]
    rows: List[ReportRow]
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    config: Dict[str, Any] = field(default_factory=dict)
    timing: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        """Every threshold passes; unresolvable points are ignored unless they fail outright."""
        verdicts = [r.verdict for r in self.rows]
        return FAIL not in verdicts and MARGINAL not in verdicts and PASS in verdicts

    def counts(self) -> Dict[str, int]:
        out = {v: 0 for v in (PASS, MARGINAL, FAIL, UNRESOLVED)}
        for r in self.rows:
            out[r.verdict] += 1
        return out

    def to_dict(self, include_timing: bool = True) -> Dict[str, Any]:
        d = asdict(self)
        d["passed"] = self.passed
        if not include_timing:
            d.pop("timing")
        return d

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True, allow_nan=True) + "\n"

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ScenarioReport":
        d = dict(d)
        d.pop("passed", None)
        d["rows"] = [ReportRow(**r) for r in d["rows"]]
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioReport":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([self.scenario, repr(r.x), r.n, r.k, repr(r.p_hat), repr(r.upper_cl),
                        repr(r.bound_raw), repr(r.bound_clamped), r.verdict])
        return buf.getvalue()


def certify(scenario: str, estimates: Sequence[TailEstimate], bounds: Sequence[BoundValue],
            *, seed: int = 0, confidence: float = 0.99, bound_family: str = "",
            params: Optional[Dict[str, Any]] = None, provenance: Optional[Dict[str, Any]] = None,
            diagnostics: Optional[Dict[str, Any]] = None) -> ScenarioReport:
    """Compare each tail estimate with the bound at the same threshold.

    PASS needs the exact upper limit at or below the clamped bound; MARGINAL
    means only the point estimate is below it; FAIL means the point
    estimate already exceeds it.
    """
    if len(estimates) != len(bounds):
        raise InvalidInput(f"{len(estimates)} estimates but {len(bounds)} bound values")
    if not estimates:
        raise InvalidInput("nothing to certify")
    rows = []
    for est, b in zip(estimates, bounds):
        raw = b.raw
        rows.append(ReportRow(est.x, est.n, est.k, est.p_hat, est.upper_cl, est.resolvable,
                              raw if math.isfinite(raw) else math.inf, b.clamped, verdict(est, b)))
    return ScenarioReport(scenario, int(seed), float(confidence), bound_family, dict(params or {}),
                          dict(provenance or {}), rows, dict(diagnostics or {}))
