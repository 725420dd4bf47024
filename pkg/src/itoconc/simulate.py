"""Discretised Brownian paths and the processes built on them.

Every path draws from its own counter-based stream, keyed by the ensemble
seed with the path index in the high word of the Philox counter. A path's
increments therefore do not depend on how the ensemble is split into chunks
or across worker processes. All per-path results are bit-for-bit
reproducible from ``(seed, path index, grid)``.

Integrals use the left-endpoint (Ito) rule. Running suprema are taken over
grid points only, so they underestimate the continuous supremum and the
resulting empirical tails are biased low.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, Optional

import numpy as np

from .bounds import check_feller
from .errors import InvalidParameter, SimulationFailure

DEFAULT_N_STEPS = 2 ** 12
DEFAULT_N_PATHS = 10 ** 5
DEFAULT_CHUNK = 512

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class GridSpec:
    T: float = 1.0
    n_steps: int = DEFAULT_N_STEPS

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0):
            raise InvalidParameter(f"T must be positive, got {self.T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise InvalidParameter(f"n_steps must be an integer >= 2, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


def path_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for path ``index`` of ensemble ``seed``."""
    return np.random.Generator(np.random.Philox(key=seed & _SEED_MASK, counter=index << 128))


@dataclass(frozen=True)
class PathEnsemble:
    """Lazily generated ensemble of Brownian increments on a uniform grid."""

    seed: int
    n_paths: int
    grid: GridSpec

    def __post_init__(self):
        if self.n_paths < 1:
            raise InvalidParameter(f"n_paths must be positive, got {self.n_paths}")
        if not 0 <= self.seed <= _SEED_MASK:
            raise InvalidParameter(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def increments(self, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
        """Increments ``dB`` of paths ``start..stop-1``, shape ``(m, n_steps)``."""
        stop = self.n_paths if stop is None else min(stop, self.n_paths)
        n, sd = self.grid.n_steps, math.sqrt(self.grid.dt)
        out = np.empty((max(stop - start, 0), n))
        for row, i in enumerate(range(start, stop)):
            path_rng(self.seed, i).standard_normal(n, out=out[row])
        out *= sd
        return out

    def brownian(self, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
        return brownian_from_increments(self.increments(start, stop))

    def chunks(self, size: int = DEFAULT_CHUNK) -> Iterator[range]:
        for lo in range(0, self.n_paths, size):
            yield range(lo, min(lo + size, self.n_paths))


def gen_brownian(seed: int, n_paths: int, grid: GridSpec) -> PathEnsemble:
    return PathEnsemble(int(seed), int(n_paths), grid)


# -- block-level kernels: arrays of shape (paths, grid points) ------------------

def brownian_from_increments(dB: np.ndarray) -> np.ndarray:
    B = np.zeros((dB.shape[0], dB.shape[1] + 1))
    np.cumsum(dB, axis=1, out=B[:, 1:])
    return B


def ito_integral(u: np.ndarray, dB: np.ndarray) -> np.ndarray:
    """Partial sums ``sum_{i<k} u_i dB_i`` with the value 0 at ``t = 0``.

    ``u`` holds the integrand at the left endpoints; a trailing column for
    the final grid point is ignored.
    """
    n = dB.shape[1]
    return brownian_from_increments(u[:, :n] * dB)


def running_sup(path: np.ndarray) -> np.ndarray:
    """Max over grid points, ``t = 0`` included."""
    return path.max(axis=1)


def running_max(B: np.ndarray) -> np.ndarray:
    return np.maximum.accumulate(B, axis=1)


def cir_from_increments(dB: np.ndarray, dt: float, a: float, b: float,
                        sigma: float, x0: float) -> np.ndarray:
    """Full-truncation Euler paths; the returned values are clipped at 0."""
    m, n = dB.shape
    X = np.empty((m, n + 1))
    X[:, 0] = x0
    cur = np.full(m, float(x0))
    for i in range(n):
        pos = np.maximum(cur, 0.0)
        cur = cur + (a - b * pos) * dt + sigma * np.sqrt(pos) * dB[:, i]
        X[:, i + 1] = cur
    np.maximum(X, 0.0, out=X)
    return X


def cir_mean(t, a: float, b: float, x0: float):
    """``E[X_t] = x0 e^{-bt} + (a/b)(1 - e^{-bt})``."""
    t = np.asarray(t, dtype=float)
    return x0 * np.exp(-b * t) + (a / b) * (-np.expm1(-b * t))


class ConstantKernel:
    """``g(s, theta) = value`` on ``[0, T]^2``."""

    def __init__(self, value: float = 1.0):
        self.value = float(value)

    def l2_norm(self, T: float) -> float:
        return abs(self.value) * T

    def inner(self, t: np.ndarray, dB: np.ndarray) -> np.ndarray:
        return self.value * brownian_from_increments(dB)[:, :-1]


class ExpProductKernel:
    """``g(s, theta) = scale * exp(-rate * s) * exp(-rate * theta)``."""

    def __init__(self, scale: float = 1.0, rate: float = 1.0):
        if rate < 0:
            raise InvalidParameter(f"rate must be nonnegative, got {rate}")
        self.scale, self.rate = float(scale), float(rate)

    def l2_norm(self, T: float) -> float:
        r = self.rate
        mass = T if r == 0 else -math.expm1(-2.0 * r * T) / (2.0 * r)
        return abs(self.scale) * mass

    def inner(self, t: np.ndarray, dB: np.ndarray) -> np.ndarray:
        w = np.exp(-self.rate * t[:-1])
        return self.scale * w * brownian_from_increments(dB * w)[:, :-1]


class CallableKernel:
    """Arbitrary symmetric ``g(s, theta)`` (vectorised); costs O(n_steps^2) per path."""

    def __init__(self, g: Callable[[np.ndarray, np.ndarray], np.ndarray]):
        self.g = g

    def l2_norm(self, T: float, n: int = 2000) -> float:
        s = (np.arange(n) + 0.5) * (T / n)
        G = np.asarray(self.g(s[:, None], s[None, :]), dtype=float)
        return math.sqrt(float(np.sum(G * G)) * (T / n) ** 2)

    def inner(self, t: np.ndarray, dB: np.ndarray) -> np.ndarray:
        tl = t[:-1]
        G = np.asarray(self.g(tl[:, None], tl[None, :]), dtype=float)
        G = np.broadcast_to(G, (tl.size, tl.size))
        return dB @ np.tril(G, k=-1).T


def double_integral_from_increments(t: np.ndarray, dB: np.ndarray, kernel) -> np.ndarray:
    """Discretised ``I_t(g)``: twice the Ito integral of ``u_s = sum_{theta_j < s} g(s, theta_j) dB_j``."""
    return 2.0 * ito_integral(kernel.inner(t, dB), dB)


# -- ensemble-level operations ---------------------------------------------------

PathFunctional = Callable[[GridSpec, np.ndarray, int], Dict[str, np.ndarray]]


def _run_chunk(args):
    ensemble, functional, lo, hi = args
    return functional(ensemble.grid, ensemble.increments(lo, hi), lo)


def map_paths(ensemble: PathEnsemble, functional: PathFunctional, workers: int = 1,
              chunk_size: int = DEFAULT_CHUNK) -> Dict[str, np.ndarray]:
    """Apply ``functional(grid, dB, first_index)`` chunk by chunk and concatenate.

    The functional must return per-path arrays only, so the output is the
    same for every ``workers`` and ``chunk_size``.
    """
    tasks = [(ensemble, functional, r.start, r.stop) for r in ensemble.chunks(chunk_size)]
    if workers <= 1 or len(tasks) == 1:
        parts = [_run_chunk(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, tasks))
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}


def check_finite(values: np.ndarray, first_index: int, what: str):
    bad = ~np.isfinite(values)
    if bad.any():
        row = int(np.argwhere(bad)[0][0])
        raise SimulationFailure(f"non-finite {what} on path {first_index + row}",
                                path_index=first_index + row)


class ItoSupFunctional:
    """Per-path running supremum of ``int u dB`` for an adapted integrand.

    ``integrand(t, B)`` receives the grid and Brownian paths of shape
    ``(m, n+1)`` and returns ``u`` at the grid points; only the values at
    ``t_0..t_{n-1}`` enter the sum.
    """

    def __init__(self, integrand):
        self.integrand = integrand

    def __call__(self, grid: GridSpec, dB: np.ndarray, first: int):
        B = brownian_from_increments(dB)
        u = np.asarray(self.integrand(grid.times, B), dtype=float)
        u = np.broadcast_to(u, B.shape) if u.ndim < 2 else u
        check_finite(u[:, :dB.shape[1]], first, "integrand value")
        return {"sup": running_sup(ito_integral(u, dB))}


def ito_sup(ensemble: PathEnsemble, integrand, workers: int = 1) -> np.ndarray:
    return map_paths(ensemble, ItoSupFunctional(integrand), workers)["sup"]


def _path_range(ensemble, paths):
    if paths is None:
        return 0, ensemble.n_paths
    return paths.start, paths.stop


def running_max_process(ensemble: PathEnsemble, paths: Optional[range] = None) -> np.ndarray:
    """``X_t = max_{u <= t} B_u`` for the selected paths (all by default)."""
    return running_max(ensemble.brownian(*_path_range(ensemble, paths)))


def cir_paths(ensemble: PathEnsemble, a: float, b: float, sigma: float, x0: float,
              paths: Optional[range] = None) -> np.ndarray:
    check_feller(a, b, sigma, x0, ensemble.grid.T)
    dB = ensemble.increments(*_path_range(ensemble, paths))
    return cir_from_increments(dB, ensemble.grid.dt, a, b, sigma, x0)


class DoubleIntegralSupFunctional:
    def __init__(self, kernel):
        self.kernel = kernel

    def __call__(self, grid: GridSpec, dB: np.ndarray, first: int):
        return {"sup": running_sup(double_integral_from_increments(grid.times, dB, self.kernel))}


def double_integral_sup(ensemble: PathEnsemble, kernel, workers: int = 1) -> np.ndarray:
    return map_paths(ensemble, DoubleIntegralSupFunctional(kernel), workers)["sup"]


def double_integral_paths(ensemble: PathEnsemble, kernel,
                          paths: Optional[range] = None) -> np.ndarray:
    dB = ensemble.increments(*_path_range(ensemble, paths))
    return double_integral_from_increments(ensemble.grid.times, dB, kernel)


def gaussian_functional_samples(seed: int, n_samples: int, f: Callable[[np.ndarray], np.ndarray],
                                n: int, mean: Optional[float] = None) -> np.ndarray:
    """Centred samples of ``F = f(Z_1, ..., Z_n)`` for a standard Gaussian vector.

    ``f`` maps an ``(n_samples, n)`` array to ``n_samples`` values. The
    analytic mean is subtracted when given, the sample mean otherwise.
    """
    if n_samples < 1 or n < 1:
        raise InvalidParameter("n_samples and n must be positive")
    Z = path_rng(seed, 0).standard_normal((n_samples, n))
    F = np.broadcast_to(np.asarray(f(Z), dtype=float), (n_samples,)).copy()
    check_finite(F, 0, "functional value")
    if mean is None:
        # constant f must centre to exact zeros
        mean = F[0] if np.all(F == F[0]) else F.mean()
    return F - mean
