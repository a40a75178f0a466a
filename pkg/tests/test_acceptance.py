"""Exit-criteria suite.

Each test records a PASS/FAIL line through ``conftest.record``; the terminal
summary prints one line per criterion. Criteria that cannot be met at the
stated parameters are strict xfails, with the analysis in the decisions
ledger.
"""

import math
import time

import numpy as np
import pytest

from conftest import record
from oracles import conv_loop, corr_loop, smoothed_indicator_mc, smoothed_soft_mc
from sasbd.cli import main, run_minimize
from sasbd.datagen import InstanceSpec, derive_seed, make_instance, truncated_shift_coherence
from sasbd.minimize import MinimizeConfig
from sasbd.objective import ObjectiveContext, eval_phi_rho, min_eigpair, rgrad_phi_rho, rhess_vec, tangent_project
from sasbd.refine import RefineConfig, refine_loop
from sasbd.shiftspace import beta_of, classify_beta, classify_region, max_corr, oracle_smoothed_indicator, \
    oracle_smoothed_soft
from sasbd.signal import cconv, ccorr, embed, project_sphere, shift
from sasbd.surrogate import SurrogateParams, prox_residual, prox_rho, prox_rho_derivative, soft_threshold

pytestmark = pytest.mark.acceptance

# accepted-step Armijo bookkeeping across every solver run in this module
ARMIJO = {"runs": 0, "steps": 0, "violations": 0}


def _solve(inst, solver="argd", cfg=None):
    a, trace = run_minimize(inst, solver, cfg or MinimizeConfig())
    ARMIJO["runs"] += 1
    ARMIJO["steps"] += int(np.count_nonzero(~np.isnan(trace.decrease)))
    ARMIJO["violations"] += trace.armijo_violations()
    return a, trace


# -- 1: signal algebra --------------------------------------------------------

def test_criterion_1_signal_algebra():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = worst_sym = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 65))
        m = int(rng.integers(1, n + 1))
        a, x = rng.standard_normal(m), rng.standard_normal(n)
        scale = np.linalg.norm(a) * np.linalg.norm(x) * math.sqrt(n)
        worst = max(worst, np.max(np.abs(cconv(a, x) - conv_loop(a, x))) / scale,
                    np.max(np.abs(ccorr(x, a) - corr_loop(x, a))) / scale)
        ell = int(rng.integers(-n, n + 1))
        a_full = embed(a, n)
        sym = cconv(shift(a_full, ell), shift(x, -ell)) - cconv(a_full, x)
        worst_sym = max(worst_sym, np.max(np.abs(sym)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and worst_sym <= 1e-10 and elapsed < 5
    record(1, "fft vs loops", ok, f"scaled err {worst:.1e}, shift identity {worst_sym:.1e}, {elapsed:.2f}s")
    assert ok


# -- 2: prox ------------------------------------------------------------------

def test_criterion_2_prox_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(102)
    params = SurrogateParams(0.3, 3e-3)
    z = rng.standard_normal(10_000) * 2
    x = prox_rho(z, params)
    stat = float(np.max(np.abs(prox_residual(x, z, params))))
    gap = np.sign(z) * (x - soft_threshold(z, params.lam))
    bound = math.sqrt(params.lam * params.delta)
    sandwich = bool(np.all(gap >= 0) and np.all(gap <= bound))
    zs = z[:500]
    h = 1e-6
    fd = (prox_rho(zs + h, params) - prox_rho(zs - h, params)) / (2 * h)
    d = prox_rho_derivative(zs, params)
    deriv = float(np.max(np.abs(fd - d) / np.maximum(np.abs(d), 1e-3)))
    elapsed = time.perf_counter() - t0
    ok = stat <= 1e-12 and sandwich and deriv <= 1e-5 and elapsed < 5
    record(2, "prox", ok, f"stationarity {stat:.1e}, sandwich {sandwich}, derivative rel {deriv:.1e}, "
                          f"{elapsed:.2f}s")
    assert ok


# -- 3: differentiation -------------------------------------------------------

def _retract(a, v):
    return project_sphere(a + v)


def _tangent_basis(a):
    q, _ = np.linalg.qr(np.column_stack([a, np.eye(a.size)]))
    return q[:, 1:a.size]


def test_criterion_3_differentiation():
    t0 = time.perf_counter()
    p0, n, theta = 6, 256, 0.1
    p = 3 * p0 - 2
    g_err = sym_err = hvp_err = 0.0
    for seed in range(20):
        inst = make_instance(InstanceSpec(p0, n, theta, "generic", 300 + seed))
        lam = 0.5 / math.sqrt(p0 * theta)
        ctx = ObjectiveContext(inst.y, p, SurrogateParams(lam, 1e-2 * lam))
        rng = np.random.default_rng(seed)
        for _ in range(100):
            a = project_sphere(rng.standard_normal(p))
            g = rgrad_phi_rho(a, ctx)
            B = _tangent_basis(a)
            h = 1e-6
            fd = np.array([(eval_phi_rho(_retract(a, h * b), ctx).value
                            - eval_phi_rho(_retract(a, -h * b), ctx).value) / (2 * h) for b in B.T])
            g_err = max(g_err, np.linalg.norm(B @ fd - g) / np.linalg.norm(g))
            u, v = (tangent_project(a, w) for w in rng.standard_normal((2, p)))
            u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
            Hu, Hv = rhess_vec(a, u, ctx), rhess_vec(a, v, ctx)
            sym_err = max(sym_err, abs(u @ Hv - v @ Hu) / max(1.0, abs(u @ Hv)))
            hh = 1e-5
            dg = (rgrad_phi_rho(_retract(a, hh * v), ctx) - rgrad_phi_rho(_retract(a, -hh * v), ctx)) / (2 * hh)
            hvp_err = max(hvp_err, np.linalg.norm(tangent_project(a, dg) - Hv) / max(np.linalg.norm(Hv), 1e-12))
    elapsed = time.perf_counter() - t0
    ok = g_err <= 1e-4 and sym_err <= 1e-9 and hvp_err <= 1e-3 and elapsed < 60
    record(3, "derivatives", ok, f"grad rel {g_err:.1e}, hess symmetry {sym_err:.1e}, hvp rel {hvp_err:.1e}, "
                                 f"2000 points, {elapsed:.1f}s")
    assert ok


# -- 4: Gaussian closed forms -------------------------------------------------

def test_criterion_4_analysis_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(104)
    worst = 0.0
    for b in (-0.8, 0.3, 1.5):
        for lam in (0.1, 0.5, 1.0):
            for s in (-0.5, 0.0, 0.6):
                m, se = smoothed_soft_mc(b, lam, s, 1_000_000, rng)
                worst = max(worst, abs(m - oracle_smoothed_soft(b, lam, s)) / se)
                m, se = smoothed_indicator_mc(b, lam, s, 1_000_000, rng)
                worst = max(worst, abs(m - oracle_smoothed_indicator(b, lam, s)) / se)
    elapsed = time.perf_counter() - t0
    ok = worst <= 5 and elapsed < 60
    record(4, "closed forms vs MC", ok, f"27 points, worst {worst:.2f} standard errors, {elapsed:.1f}s")
    assert ok


# -- 5: geometry audit --------------------------------------------------------

P0_5, N_5, THETA_5 = 64, 2**16, 0.03
LAM_5 = 0.1 / math.sqrt(P0_5 * THETA_5)


@pytest.fixture(scope="module")
def audit_instance():
    inst = make_instance(InstanceSpec(P0_5, N_5, THETA_5, "generic", 0))
    p = 3 * P0_5 - 2
    ctx = ObjectiveContext(inst.y, p, SurrogateParams(LAM_5, 1e-2 * LAM_5))
    return inst, ctx, p


@pytest.mark.slow
def test_criterion_5_negative_curvature_region(audit_instance):
    t0 = time.perf_counter()
    inst, ctx, p = audit_instance
    a0 = inst.a0.values
    rng = np.random.default_rng(105)
    neg = total = 0
    while total < 100:
        i, j = rng.choice(np.arange(-P0_5 + 1, P0_5), 2, replace=False)
        c = rng.uniform(0.8, 1.0) * rng.choice([-1.0, 1.0])
        a = project_sphere(embed(a0, p, P0_5 - 1 + i) + c * embed(a0, p, P0_5 - 1 + j)
                           + 1e-3 * rng.standard_normal(p))
        if classify_region(a, a0, THETA_5, LAM_5)[0] != "NegativeCurvature":
            continue
        total += 1
        neg += min_eigpair(a, ctx)[0] < 0
    elapsed = time.perf_counter() - t0
    ok = neg >= 90 and elapsed < 600
    record(5, "NegativeCurvature", ok, f"{neg}/100 negative min-eig, {elapsed:.0f}s")
    assert ok


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason=(
    "with lam = 0.1/sqrt(p0 theta) the ConvexNearShift threshold nu2(theta)*lam = 0.0015 on the "
    "second-largest |beta| lies below what points near a generic shift attain; the region is empty"))
def test_criterion_5_convex_near_shift_region(audit_instance):
    inst, ctx, p = audit_instance
    a0 = inst.a0.values
    rng = np.random.default_rng(205)
    found = []
    best_b1 = np.inf
    for _ in range(2000):
        ell = int(rng.integers(-P0_5 + 1, P0_5))
        eps = 10 ** rng.uniform(-4, -1)
        a = project_sphere(embed(a0, p, P0_5 - 1 + ell) + eps * rng.standard_normal(p))
        label, _, b1 = classify_beta(beta_of(a, a0), THETA_5, LAM_5)
        best_b1 = min(best_b1, b1)
        if label == "ConvexNearShift":
            found.append(a)
        if len(found) == 100:
            break
    pos = sum(min_eigpair(a, ctx)[0] > 0 for a in found)
    ok = len(found) == 100 and pos >= 90
    record(5, "ConvexNearShift", ok, f"{len(found)} labelled points among 2000 near-shift draws "
                                     f"(smallest |beta_(1)| {best_b1:.4f}), {pos} positive; xfail, see ledger")
    assert ok


# -- 6: end-to-end recovery ---------------------------------------------------

def _recovery_rate(p0, theta, n, seeds, stop_after_misses=None):
    hits = misses = 0
    for seed in seeds:
        inst = make_instance(InstanceSpec(p0, n, theta, "generic", seed))
        a, _ = _solve(inst)
        ok = max_corr(a, inst.a0) > 0.95
        hits += ok
        misses += not ok
        if stop_after_misses is not None and misses > stop_after_misses:
            break
    return hits, misses


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason=(
    "theta = 0.04 is above the range (about 0.13/sqrt(p0) = 0.016 at p0 = 64) in which the planted "
    "shift is a local minimizer at lam = 0.5/sqrt(p0 theta)"))
def test_criterion_6_recovery_theta_004():
    t0 = time.perf_counter()
    hits, misses = _recovery_rate(64, 0.04, 2**16, range(20), stop_after_misses=4)
    ok = hits >= 16
    record(6, "theta=0.04", ok, f"{hits} hits, {misses} misses before stopping (need 16/20), "
                                f"{time.perf_counter() - t0:.0f}s; xfail, see ledger")
    assert ok


@pytest.mark.slow
def test_criterion_6_failure_theta_03():
    t0 = time.perf_counter()
    hits, _ = _recovery_rate(64, 0.3, 2**16, range(20))
    ok = hits <= 4
    record(6, "theta=0.3", ok, f"{hits}/20 successes (need <= 4), {time.perf_counter() - t0:.0f}s")
    assert ok


THETA_SWEEP = (0.005, 0.01, 0.02, 0.04, 0.08)


def _upper_crossing(rates):
    """theta where the success rate falls through 1/2 above its best cell (log interpolation)."""
    logs = np.log(THETA_SWEEP)
    k = int(np.argmax(rates))
    for i in range(k, len(rates) - 1):
        if rates[i] >= 0.5 > rates[i + 1]:
            w = (rates[i] - 0.5) / (rates[i] - rates[i + 1])
            return float(np.exp(logs[i] + w * (logs[i + 1] - logs[i])))
    return float(THETA_SWEEP[-1]) if rates[-1] >= 0.5 else float(THETA_SWEEP[k])


@pytest.mark.slow
def test_criterion_6_transition_direction():
    t0 = time.perf_counter()
    crossings = {}
    for p0 in (16, 32, 64):
        rates = []
        for theta in THETA_SWEEP:
            seeds = [derive_seed(0, p0, theta, k) for k in range(5)]
            hits, _ = _recovery_rate(p0, theta, 2**15, seeds)
            rates.append(hits / 5)
        crossings[p0] = _upper_crossing(rates)
    xs = np.log([16, 32, 64])
    slope = float(np.polyfit(xs, np.log([crossings[q] for q in (16, 32, 64)]), 1)[0])
    ok = crossings[16] >= crossings[32] >= crossings[64] and crossings[16] > crossings[64] and slope < 0
    desc = ", ".join(f"p0={q}: {crossings[q]:.3f}" for q in (16, 32, 64))
    record(6, "transition", ok, f"theta* {desc}; log-log slope {slope:.2f}, {time.perf_counter() - t0:.0f}s")
    assert ok


# -- 7: refinement rate -------------------------------------------------------

@pytest.mark.slow
def test_criterion_7_refinement_rate():
    t0 = time.perf_counter()
    p0, n, theta = 32, 2**15, 0.02
    p = 3 * p0 - 2
    rate_ok = resid_ok = 0
    worst_ratio = worst_resid = 0.0
    for seed in range(20):
        inst = make_instance(InstanceSpec(p0, n, theta, "generic", seed))
        mu = truncated_shift_coherence(inst.a0.values)
        rng = np.random.default_rng(seed + 1000)
        base = embed(inst.a0.values, p, p0 - 1)
        d = rng.standard_normal(p)
        d -= (d @ base) * base
        d *= (mu + 1 / p) / np.linalg.norm(d)
        a_bar = project_sphere(base + d)
        a, x, tr = refine_loop(a_bar, inst.y, RefineConfig(lambda0_mode="data", K2=12),
                               dict(theta=theta, mu=mu, a0=inst.a0.values))
        err = np.array(tr.err_a)
        bound = (mu + 1 / p) * 2.0 ** -np.arange(1, 9)
        rate_ok += bool(np.all(err[:8] <= bound))
        worst_ratio = max(worst_ratio, float(np.max(err[:8] / bound)))
        resid = np.linalg.norm(cconv(a.values, x.values) - inst.y.values) / np.linalg.norm(inst.y.values)
        resid_ok += resid <= 1e-4
        worst_resid = max(worst_resid, resid)
    elapsed = time.perf_counter() - t0
    ok = rate_ok >= 16 and resid_ok >= 16 and elapsed < 600
    record(7, "refinement", ok, f"rate on {rate_ok}/20 (worst err/bound {worst_ratio:.2f}), residual <= 1e-4 on "
                                f"{resid_ok}/20 (worst {worst_resid:.1e}), K2 = 12, {elapsed:.0f}s")
    assert ok


# -- 8: Armijo ----------------------------------------------------------------

@pytest.mark.slow
def test_criterion_8_armijo_log():
    # a few runs of each solver so the check is meaningful when run alone
    for seed in range(3):
        inst = make_instance(InstanceSpec(16, 4096, 0.01, "generic", 800 + seed))
        _solve(inst, "argd")
        _solve(inst, "curvilinear")
    ok = ARMIJO["violations"] == 0 and ARMIJO["steps"] > 0
    record(8, "armijo", ok, f"{ARMIJO['violations']} violations over {ARMIJO['steps']} accepted steps "
                            f"in {ARMIJO['runs']} runs")
    assert ok


# -- 9: determinism -----------------------------------------------------------

def test_criterion_9_grid_determinism(tmp_path):
    cfg = tmp_path / "grid.json"
    cfg.write_text('{"p0": [8, 12], "theta": [0.02, 0.1], "trials": 2, "n": 1024, "base_seed": 9}')
    outs = []
    for name in ("run1", "run2"):
        assert main(["grid", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
        outs.append({f: (tmp_path / name / f).read_bytes() for f in ("results.csv", "summary.json",
                                                                     "success_rate.csv")})
    ok = outs[0] == outs[1]
    record(9, "grid rerun", ok, "byte-identical results.csv, summary.json, success_rate.csv" if ok
           else "outputs differ")
    assert ok
