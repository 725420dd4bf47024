"""Acceptance gate: one verdict line per criterion (or criterion part).

Each test records its line through the ``record`` fixture and then asserts
the criterion at its stated tolerance. Nothing here is relaxed to make a
criterion pass.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy.stats import beta, norm

from itoconc import bounds as bd
from itoconc.cli import main
from itoconc.config import ScenarioConfig
from itoconc.malliavin import GrowthSpec, KernelBound, c_mid_alpha, c_neg_alpha, cir_constants
from itoconc.scenarios import SCENARIOS, run_verification
from itoconc.simulate import (
    ConstantKernel, GridSpec, PathEnsemble, brownian_from_increments, cir_mean, cir_paths,
    double_integral_from_increments, ito_sup,
)
from itoconc.verify import auto_x_grid, estimate_tail
from itoconc.vsolver import closed_form_v_alpha0, solve_v_eq1, solve_v_lt1

RNG_SEED = 20240306
ELAPSED = {6: 0.0, 7: 0.0}  # accumulated wall time of the multi-part criteria


def rel_err(a, b):
    return abs(a - b) / abs(b)


LOG_TINY = math.log(np.finfo(float).tiny)


def log_rel_err(log_a, log_b):
    """Relative error of ``exp(log_a)`` against ``exp(log_b)``, or None if both are below the normal range."""
    if max(log_a, log_b) < LOG_TINY:
        return None
    return abs(math.expm1(log_a - log_b))


# -- 1. formula identities ----------------------------------------------------------

def test_criterion_1_formula_identities(record):
    rng = np.random.default_rng(RNG_SEED)
    n = 1000
    t0 = time.perf_counter()
    worst = {"double-integral": 0.0, "cir": 0.0, "gaussian-functional": 0.0}
    skipped = 0

    def note(key, lhs, rhs):
        nonlocal skipped
        err = log_rel_err(lhs, rhs)
        if err is None:
            skipped += 1
        else:
            worst[key] = max(worst[key], err)
    for _ in range(n):
        x = rng.uniform(0, 50)
        g = rng.uniform(0.05, 10)
        lhs = bd.eval_double_integral(x, g).log_raw
        rhs = bd.eval_alpha0(0.5 * x, bd.BoundParams(g / math.sqrt(2), 0.5 * g * g)).log_raw
        note("double-integral", lhs, rhs)

        sigma = rng.uniform(0.1, 2)
        a = 0.5 * sigma ** 2 + rng.uniform(0.01, 3)
        b, x0, T = rng.uniform(0.05, 2), rng.uniform(0.05, 3), rng.uniform(0.1, 2)
        s2, c = cir_constants(a, b, sigma, x0, T)
        lhs = bd.eval_cir(x, a, b, sigma, x0, T).log_raw
        rhs = bd.eval_alpha0(x, bd.BoundParams(math.sqrt(s2), c, 0.0, T)).log_raw
        note("cir", lhs, rhs)

        s, c = rng.uniform(0.05, 10), rng.uniform(0.01, 10)
        lhs = bd.eval_gaussian_functional(x, s, c).log_raw
        rhs = math.log(2) + bd.eval_alpha0(x, bd.BoundParams(s, c)).log_raw
        note("gaussian-functional", lhs, rhs)
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-12 and elapsed < 1.0
    record(1, ok, f"max rel err {max(worst.values()):.2e} (<1e-12) over {n} draws "
                  f"{ {k: f'{v:.1e}' for k, v in worst.items()} }, {skipped} pairs below the double range "
                  f"excluded, {elapsed:.2f}s (<1s)")
    assert ok


# -- 2. v-solver ----------------------------------------------------------------------

def test_criterion_2_vsolver(record):
    rng = np.random.default_rng(RNG_SEED + 2)
    t0 = time.perf_counter()
    worst_cf = 0.0
    for _ in range(100):
        p = bd.BoundParams(rng.uniform(0.05, 10), rng.uniform(0.01, 10))
        x = rng.uniform(0, 100)
        worst_cf = max(worst_cf, rel_err(solve_v_lt1(x, p).v, closed_form_v_alpha0(x, p).v))
    v0 = [solve_v_lt1(0.0, bd.BoundParams(1.3, 0.7, a)).v for a in (0.0, 0.5, 0.9)]
    v0.append(solve_v_eq1(0.0, bd.BoundParams(1.3, 0.7, 1.0)).v)
    worst_bal = 0.0
    for _ in range(100):
        s, c, x = rng.uniform(0.05, 10), rng.uniform(0.01, 10), rng.uniform(0.01, 100)
        a = rng.uniform(0, 0.99)
        sol = solve_v_lt1(x, bd.BoundParams(s, c, a))
        e1 = x * x / (2 * s * s * sol.v)
        gap = math.expm1(0.5 * (1 - a) * sol.log_v)
        e2 = s ** (2 - 2 * a) * gap * gap / (2 * c * (1 - a) ** 2)
        worst_bal = max(worst_bal, rel_err(e1, e2))
        sol = solve_v_eq1(x, bd.BoundParams(s, c, 1.0))
        e1 = x * x / (2 * s * s * sol.v)
        e2 = sol.log_v ** 2 / (8 * c)
        worst_bal = max(worst_bal, rel_err(e1, e2))
    elapsed = time.perf_counter() - t0
    ok = worst_cf < 1e-10 and all(v == 1.0 for v in v0) and worst_bal < 1e-8 and elapsed < 1.0
    record(2, ok, f"closed-form agreement {worst_cf:.1e} (<1e-10), v(0)={v0}, "
                  f"exponent balance {worst_bal:.1e} (<1e-8), {elapsed:.2f}s (<1s)")
    assert ok


# -- 3. classical recovery ------------------------------------------------------------

@pytest.mark.parametrize("sigma_bar", [1.0, 1.5, 2.0, 5.0])
def test_criterion_3_classical_recovery(record, sigma_bar):
    t0 = time.perf_counter()
    p = bd.BoundParams(sigma_bar, 1e-16)
    xs = np.linspace(0.0, 10.0, 1001)
    worst = max(rel_err(bd.eval_alpha0(x, p).raw, 2 * math.exp(-x * x / (2 * sigma_bar ** 2))) for x in xs)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and elapsed < 1.0
    record(f"3 (sigma_bar={sigma_bar})", ok, f"max rel err on [0,10] with c=1e-16: {worst:.2e} (<1e-6), "
                                            f"{elapsed:.2f}s")
    assert ok


# -- 4. asymptotic rates --------------------------------------------------------------

@pytest.mark.parametrize("alpha", [0.0, 0.25, 0.5, 0.9, 1.0])
def test_criterion_4_asymptotic_rate(record, alpha):
    t0 = time.perf_counter()
    x = 1e8
    p = bd.BoundParams(1.0, 1.0, alpha)
    if alpha == 1.0:
        ratio = bd.eval_explicit_eq1(x, p).log_raw / math.log(x) ** 2
    else:
        ratio = bd.eval_explicit_lt1(x, p).log_raw / x ** bd.rate_exponent(alpha)
    rate = bd.asymptotic_rate(p)
    err = rel_err(ratio, rate)
    elapsed = time.perf_counter() - t0
    ok = err < 0.05 and elapsed < 1.0
    record(f"4 (alpha={alpha})", ok, f"normalised log bound {ratio:.5g} vs rate {rate:.5g} at x=1e8 "
                                     f"(sigma_bar=1, c=1): rel err {err:.3g} (<0.05)")
    assert ok


# -- 5. constant reproduction --------------------------------------------------------

def test_criterion_5_constants(record):
    t0 = time.perf_counter()
    c2 = c_mid_alpha(KernelBound.constant(1.0), GrowthSpec(2.0, 0.5), 1.0)
    e2 = rel_err((c2 / 4) ** (1 / 6), 3 ** (-1 / 12))
    c3 = c_neg_alpha(KernelBound.constant(1.0), GrowthSpec(1.0, -1.0), 1.0)
    # the bound's denominator term 2 (4 c x^2)^(1/3) is 2^(4/3) x^(2/3) exactly when c = 1/2
    e3 = max(rel_err(2 * (4 * c3 * x * x) ** (1 / 3), 2 ** (4 / 3) * x ** (2 / 3)) for x in (0.1, 1.0, 7.0))
    e3 = max(e3, max(rel_err(bd.eval_explicit_neg_alpha(x, bd.BoundParams(1.0, c3, -1.0, 1.0)).raw,
                             2 * math.exp(-x * x / (2 + 2 ** (4 / 3) * x ** (2 / 3)))) for x in (0.1, 1.0, 7.0)))
    ecir = 0.0
    for a, b, sigma, T in ((2.0, 1.0, 1.0, 1.0), (1.0, 0.3, 0.9, 2.5), (5.0, 2.0, 3.0, 0.7)):
        _, c = cir_constants(a, b, sigma, 1.0, T)
        ecir = max(ecir, rel_err(4 * math.sqrt(c), math.sqrt(2) * sigma ** 2 * math.expm1(b * T) / b))
    elapsed = time.perf_counter() - t0
    ok = max(e2, e3, ecir) < 1e-8 and elapsed < 1.0
    record(5, ok, f"c_mid={c2:.12g} (4/sqrt3) err {e2:.1e}; c_neg={c3:.12g} err {e3:.1e}; "
                  f"CIR 4sqrt(c) err {ecir:.1e} (<1e-8), {elapsed:.2f}s")
    assert ok


# -- 6. simulator oracles -------------------------------------------------------------

def test_criterion_6a_double_integral_identity(record):
    t0 = time.perf_counter()
    ens = PathEnsemble(RNG_SEED, 1000, GridSpec(1.0, 2 ** 12))
    errs = []
    for r in ens.chunks(250):
        dB = ens.increments(r.start, r.stop)
        I = double_integral_from_increments(ens.grid.times, dB, ConstantKernel(1.0))
        B = brownian_from_increments(dB)
        errs.append(np.abs(I - (B * B - ens.grid.times)).max(axis=1))
    errs = np.concatenate(errs)
    elapsed = time.perf_counter() - t0
    ELAPSED[6] += elapsed
    ok = errs.max() < 5e-2
    record("6a", ok, f"max_t |I_t - (B_t^2 - t)| over 1000 paths at 2^12 steps: max {errs.max():.4f}, "
                     f"mean {errs.mean():.4f}, paths above 0.05: {(errs >= 5e-2).sum()} (<0.05 required), "
                     f"{elapsed:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def brownian_sup():
    t0 = time.perf_counter()
    ens = PathEnsemble(RNG_SEED, 100_000, GridSpec(1.0, 2 ** 12))
    samples = ito_sup(ens, lambda t, B: 1.0)
    elapsed = time.perf_counter() - t0
    ELAPSED[6] += elapsed
    return samples, ens.grid, elapsed


def _two_sided_bands(samples, grid, gamma=0.99):
    est = estimate_tail(samples, grid, gamma)
    out = []
    for e in est:
        lo = beta.ppf((1 - gamma) / 2, e.k, e.n - e.k + 1) if e.k > 0 else 0.0
        hi = beta.ppf((1 + gamma) / 2, e.k + 1, e.n - e.k) if e.k < e.n else 1.0
        out.append((e, lo, hi))
    return out


def test_criterion_6b_reflection_tail(record, brownian_sup):
    samples, grid, elapsed = brownian_sup
    xs = auto_x_grid(samples, 25)
    bands = _two_sided_bands(samples, xs)
    outside = [(e.x, e.p_hat, 2 * norm.sf(e.x)) for e, lo, hi in bands if not lo <= 2 * norm.sf(e.x) <= hi]
    ok = not outside
    worst = min(outside, key=lambda t: t[1] / t[2]) if outside else None
    detail = (f"{len(bands) - len(outside)}/{len(bands)} grid points have 2*Phi(-x) inside the two-sided "
              f"99% Clopper-Pearson band (n=1e5, 2^12 steps, {elapsed:.0f}s)")
    if worst:
        detail += (f"; outside for x in [{min(o[0] for o in outside):.3g}, {max(o[0] for o in outside):.3g}],"
                   f" worst x={worst[0]:.3g} p_hat={worst[1]:.4g} vs {worst[2]:.4g}")
    record("6b", ok, detail)
    assert ok


def test_criterion_6b_diagnostic_grid_corrected_oracle(record, brownian_sup):
    """Not a criterion: the same samples against the oracle shifted for grid monitoring."""
    samples, grid, _ = brownian_sup
    shift = 0.5826 * math.sqrt(grid.dt)  # -zeta(1/2) / sqrt(2 pi)
    bands = _two_sided_bands(samples, auto_x_grid(samples, 25))
    inside = sum(lo <= 2 * norm.sf(e.x + shift) <= hi for e, lo, hi in bands)
    record("6b diagnostic", inside == len(bands),
           f"{inside}/{len(bands)} inside with the discrete-monitoring shift x + 0.5826 sqrt(dt)")
    assert inside == len(bands)


def test_criterion_6c_cir_mean(record):
    t0 = time.perf_counter()
    a, b, sigma, x0 = 2.0, 1.0, 1.0, 1.0
    ens = PathEnsemble(RNG_SEED, 100_000, GridSpec(1.0, 2 ** 12))
    idx = [1024, 2048, 4096]
    vals = np.concatenate([cir_paths(ens, a, b, sigma, x0, r)[:, idx] for r in ens.chunks(5000)])
    zs = []
    for j, i in enumerate(idx):
        se = vals[:, j].std(ddof=1) / math.sqrt(vals.shape[0])
        zs.append((vals[:, j].mean() - cir_mean(ens.grid.times[i], a, b, x0)) / se)
    elapsed = time.perf_counter() - t0
    ELAPSED[6] += elapsed
    ok = all(abs(z) < 4 for z in zs)
    record("6c", ok, f"CIR mean z-scores at t=0.25,0.5,1: {', '.join(f'{z:+.2f}' for z in zs)} (|z|<4), "
                     f"{elapsed:.0f}s")
    assert ok


def test_criterion_6_runtime(record):
    ok = ELAPSED[6] < 300
    record("6 (runtime)", ok, f"simulator oracles took {ELAPSED[6]:.0f}s in total (<300s)")
    assert ok


# -- 7. end-to-end certification -----------------------------------------------------

@pytest.mark.parametrize("name", list(SCENARIOS))
def test_criterion_7_end_to_end(record, name):
    t0 = time.perf_counter()
    rep = run_verification(ScenarioConfig(name).validated())
    elapsed = time.perf_counter() - t0
    ELAPSED[7] += elapsed
    counts = rep.counts()
    record(f"7 ({name})", rep.passed, f"{counts} family {rep.bound_family}, n_paths=1e5, 2^12 steps, "
                                      f"{elapsed:.0f}s")
    assert rep.passed


def test_criterion_7_runtime(record):
    ok = ELAPSED[7] < 900
    record("7 (runtime)", ok, f"all scenarios took {ELAPSED[7]:.0f}s in total (<900s)")
    assert ok


# -- 8. determinism -----------------------------------------------------------------

def test_criterion_8_determinism(record, tmp_path, capsys):
    mismatches = []
    for name in SCENARIOS:
        cfg = ScenarioConfig(name, n_paths=5000, n_steps=512, out_dir=str(tmp_path))
        ini = tmp_path / f"{name}.ini"
        ini.write_text(cfg.validated().to_ini())
        runs = []
        for i, workers in enumerate((1, 1, 4, 16)):
            out = tmp_path / f"{name}-{i}"
            main(["verify", "--config", str(ini), "--workers", str(workers), "--out", str(out)])
            doc = json.loads((out / f"{name}.json").read_text())
            doc.pop("timing")
            runs.append((json.dumps(doc, sort_keys=True), (out / f"{name}.csv").read_bytes()))
        if any(r != runs[0] for r in runs[1:]):
            mismatches.append(name)
    capsys.readouterr()
    ok = not mismatches
    record(8, ok, f"JSON (timing excluded) and CSV identical for 2 runs at workers=1 and at workers=4, 16, "
                  f"all {len(SCENARIOS)} scenarios; mismatches: {mismatches or 'none'}")
    assert ok
