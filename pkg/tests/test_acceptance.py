"""Acceptance suite: one test (and one PASS/FAIL line) per criterion.

Run with ``pytest tests/test_acceptance.py`` (the lines are repeated in the
terminal summary) or directly as ``python3 tests/test_acceptance.py``.
"""
import math
import sys
import time

import numpy as np
import pytest
from scipy.optimize import linprog, minimize_scalar

from wpdiag.adsgeom import (
    ScaleTooCoarse as CoarseTransform, canonical_transform, corner_positions, limiting_domain,
    normalization_error,
)
from wpdiag.beta import best_linear_linf, check_level, level_stats, pair_checks
from wpdiag.charts import (
    causal_type, ein_metric_fd, kleinian, kleinian_inverse, klein_form, random_ads_point,
)
from wpdiag.cli import RunConfig, run_diagnostics
from wpdiag.epsilon import (
    epsilon_number, f_tilde, fg_gap, fractional_majorant, g_tilde, gronwall_checks,
    quadratic_majorant, select_delta,
)
from wpdiag.gauss import lambda_from_mu, mu_from_lambda, mu_tilde_sq, pullback_metrics, random_sl2
from wpdiag.homeo import (
    PI, Interval, dyadic_interval, from_mobius, jump_log_growth, make_homeo, pwl_equal, rotation, trig,
)
from wpdiag.mobius import MobiusMap, inner22, isom_action, mat_inner

RESULTS = {}


def report(name, ok, detail):
    line = f"{name}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[name] = line
    print(line, flush=True)
    return ok


# ---------------------------------------------------------------------------
# 1. best-line oracle
# ---------------------------------------------------------------------------

def lp_best_line(f, lo, hi, breaks=(), n=100_000):
    """Minimax line on an n-point grid (plus kinks) as a 3-variable LP.

    The LP is solved by HiGHS in scaled coordinates; its slope is then
    polished by a bracketed convex search of E(g) = (max r - min r)/2 on
    the same grid, since HiGHS stops at ~1e-7 feasibility tolerance.
    """
    x = np.linspace(lo, hi, n)
    kinks = [b for b in breaks if lo < b < hi]
    if kinks:
        x = np.sort(np.concatenate([x, kinks]))
    y = f(x)
    c, w = 0.5 * (lo + hi), 0.5 * (hi - lo)
    u = (x - c) / w
    y0, ys = y[0], (y[-1] - y[0]) or 1.0
    v = (y - y0) / ys
    N = u.size
    A = np.empty((2 * N, 3))
    A[:N, 0], A[:N, 1], A[:N, 2] = -u, -1.0, -1.0
    A[N:, 0], A[N:, 1], A[N:, 2] = u, 1.0, -1.0
    res = linprog([0.0, 0.0, 1.0], A_ub=A, b_ub=np.concatenate([-v, v]),
                  bounds=[(None, None)] * 3, method="highs")
    assert res.status == 0, res.message
    g_lp = res.x[0]

    def E(g):
        r = v - g * u
        return 0.5 * (r.max() - r.min())

    d = 1e-4 + 10 * res.x[2]
    sol = minimize_scalar(E, bounds=(g_lp - d, g_lp + d), method="bounded",
                          options={"xatol": 1e-14, "maxiter": 5000})
    return min(float(sol.fun), E(g_lp)) * ys


def lifted_breaks(phi, lo, hi):
    out = []
    for b in phi.breaks:
        k0 = math.floor((lo - b) / PI)
        out += [b + k * PI for k in range(k0, k0 + int((hi - lo) / PI) + 3)]
    return out


def random_mobius(rng, scale=0.5):
    M = random_sl2(rng, scale)
    return from_mobius(MobiusMap.from_matrix(M))


def random_pairs(n, seed=2024):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        kind = i % 4
        if kind == 0:
            phi = trig(float(rng.uniform(0.02, 0.45)))
        elif kind == 1:
            phi = random_mobius(rng)
        elif kind == 2:
            s = rng.uniform(0.3, 2.0, size=int(rng.integers(2, 5)))
            phi = pwl_equal(float(rng.uniform(0, PI)), list(s / s.mean()))
        else:
            phi = rotation(float(rng.uniform(-3, 3)))
        m = int(rng.integers(0, 13))
        ell = PI * 2.0 ** (-m) * rng.uniform(0.5, 3.0)
        lo = float(rng.uniform(-PI, PI))
        out.append((phi, Interval(lo, lo + ell)))
    return out


def test_c1_best_line_oracle():
    pairs = random_pairs(100)
    t0 = time.perf_counter()
    ours = [best_linear_linf(phi, I).E0 for phi, I in pairs]
    t_ours = time.perf_counter() - t0
    t0 = time.perf_counter()
    ref = [lp_best_line(phi.lift_fn, I.lo, I.hi, lifted_breaks(phi, I.lo, I.hi)) for phi, I in pairs]
    t_ref = time.perf_counter() - t0
    diff = np.abs(np.array(ours) - np.array(ref))
    ok = diff.max() < 1e-8 and t_ours < 60
    assert report("C1 best-line oracle", ok,
                  f"max|dE0|={diff.max():.2e} (<1e-8) over 100 pairs; best_linear_linf {t_ours:.1f}s "
                  f"(<60s), LP oracle {t_ref:.1f}s")


# ---------------------------------------------------------------------------
# 2-3. inequality suites
# ---------------------------------------------------------------------------

ZOO3 = ["trig:0.3", "mobius:2,1,0.5,0.75", "pwl:;1.5,0.5"]


def test_c2_inequality_suite():
    n_checked = 0
    bad = []
    for spec in ZOO3:
        phi = make_homeo(spec)
        stats = [level_stats(phi, 0.0, m, lam=3.0) for m in range(11)]
        for m, st in enumerate(stats):
            n_checked += st.lo.size
            bad += [f"{spec} {v}" for v in check_level(st)]
            if m:
                for name, (n, viol) in pair_checks(stats[m - 1], st).items():
                    n_checked += n
                    bad += [f"{spec} m={m} {name} {v}" for v in viol]
    assert report("C2 inequality suite", not bad,
                  f"{len(bad)} violations over {n_checked} interval/pair checks "
                  f"(depth 10, {len(ZOO3)} homeos)" + (f"; first: {bad[0]}" if bad else ""))


def test_c3_gronwall():
    rep = gronwall_checks(make_homeo("trig:0.3"), depth=10, eta=0.5)
    nv = len(rep.gamma_violations) + len(rep.value_violations)
    ok = nv == 0 and rep.n_chains > 0
    assert report("C3 discrete Gronwall", ok,
                  f"{nv} violations; {rep.n_chains} chains, {rep.n_gamma} gradient and "
                  f"{rep.n_values} value comparisons; worst ratios "
                  f"{rep.worst_gamma_ratio:.3f}, {rep.worst_value_ratio:.3f}")


# ---------------------------------------------------------------------------
# 4. majorants
# ---------------------------------------------------------------------------

def test_c4_majorants():
    phi = make_homeo("trig:0.3")
    delta, _ = select_delta(phi, 0.0, 0.5, 12)
    worst_q = worst_f = math.inf
    dense_ok = True
    n = 0
    for m in range(8, 13):
        for j in (1, 2, 4):
            I = dyadic_interval(0.0, m, (2 ** m * j) // 5)
            for x in (I.center, I.lo + 0.25 * I.length, I.hi - 0.25 * I.length):
                md = quadratic_majorant(phi, I, x=x, eta=0.5, delta=delta)
                fm = fractional_majorant(phi, I, md)
                worst_q = min(worst_q, md.margin)
                worst_f = min(worst_f, fm.margin_plus, fm.margin_minus)
                # independent dense re-check at grid points
                y = np.linspace(x - 5 * md.Q, x + 3 * md.Q, 100_001)
                dense_ok &= bool(np.all(md.p(y) >= phi.lift_fn(y)))
                y = np.linspace(x - PI / 2, x + PI / 2, 100_001)
                dense_ok &= bool(np.all(fm.witness.lift_plus(y) >= phi.lift_fn(y)))
                n += 1
    rng = np.random.default_rng(4)
    P = 10.0 ** rng.uniform(-3, 1, 1000)
    Q = 10.0 ** rng.uniform(-3, 1, 1000)
    t = Q * rng.uniform(-7, 0.999, 1000)
    lhs = f_tilde(t, P, Q) - g_tilde(t, P, Q)
    rhs = fg_gap(t, P, Q)
    # relative to the size of the terms being subtracted
    size = np.abs(f_tilde(t, P, Q)) + np.abs(g_tilde(t, P, Q))
    gap_err = float(np.max(np.abs(lhs - rhs) / size))
    ok = worst_q >= 0 and worst_f >= 0 and dense_ok and gap_err < 1e-10
    assert report("C4 majorants", ok,
                  f"{n} basepoints at depths 8-12: min margins quadratic {worst_q:.2e}, "
                  f"fractional {worst_f:.2e}, dense grid {'ok' if dense_ok else 'CROSSING'}; "
                  f"gap identity rel err {gap_err:.1e} (<1e-10)")


# ---------------------------------------------------------------------------
# 5. classification experiment
# ---------------------------------------------------------------------------

CLASSIFY = {"rot:0.5": "WP-consistent", "mobius:2,1,0.5,0.75": "WP-consistent",
            "trig:0.1": "WP-consistent", "trig:0.3": "WP-consistent",
            "pwl:;1.5,0.5": "non-WP-consistent"}


def test_c5_classification(tmp_path):
    t0 = time.perf_counter()
    summ = {}
    for spec in CLASSIFY:
        cfg = RunConfig(homeo=spec, bases=[0.0, PI / 3, -PI / 3], depth=12,
                        out=str(tmp_path / spec.replace(":", "_")))
        summ[spec] = run_diagnostics(cfg)
    runtime = time.perf_counter() - t0
    notes = []
    ok = runtime < 600
    for spec, want in CLASSIFY.items():
        got = summ[spec]["classification"]
        ok &= got == want
        if got != want:
            notes.append(f"{spec}={got}")
    tails = {}
    for spec in ("trig:0.1", "trig:0.3"):
        rs = [b["ratios"] for b in summ[spec]["beta"]]
        tails[spec] = max(max(r) for r in rs)
        ok &= all(len(r) == 3 for r in rs) and tails[spec] < 0.7
    pwl = summ["pwl:;1.5,0.5"]
    floor = 0.5 * (1 / 8) ** 2
    low = min(min(b["per_depth"][2:]) for b in pwl["beta"])
    ok &= low >= floor
    h = pwl["h_half"]
    pred = jump_log_growth(make_homeo("pwl:;1.5,0.5").log_pieces)
    ok &= h["growth_per_doubling"] >= 0.5 * pred
    assert report("C5 classification", ok,
                  f"labels {'ok' if not notes else notes}; trig beta tail ratios "
                  f"{', '.join(f'{v:.3f}' for v in tails.values())} (<0.7, 3 bases); pwl min per-depth beta "
                  f"(m>=2) {low:.4f} (>= {floor:.4f}); H1/2 growth {h['growth_per_doubling']:.4f} "
                  f"(>= 0.5*{pred:.4f}); runtime {runtime:.0f}s (<600s)")


# ---------------------------------------------------------------------------
# 6. epsilon on Mobius inputs
# ---------------------------------------------------------------------------

def test_c6_epsilon_mobius():
    rng = np.random.default_rng(6)
    his, los = [], []
    for i in range(20):
        phi = random_mobius(rng)
        m = 2 + i % 9
        I = dyadic_interval(float(rng.uniform(0, PI)), m, int(rng.integers(0, 2 ** m)))
        br = epsilon_number(phi, I)
        his.append(br.hi)
        los.append(br.lo)
    his, los = np.array(his), np.array(los)
    ok = bool(np.all(his < 1e-9) and np.all(los == 0))
    assert report("C6 epsilon exact on Mobius", ok,
                  f"max hi {his.max():.3g}, min hi {his.min():.3g} (<1e-9 required); "
                  f"{int(np.sum(los > 0))}/20 brackets have a certified positive lower bound")


# ---------------------------------------------------------------------------
# 7. normalization and corners
# ---------------------------------------------------------------------------

def test_c7_normalization_and_corners():
    worst = 0.0
    n = skipped = 0
    for spec in ["rot:0.4", *ZOO3]:
        phi = make_homeo(spec)
        for m in range(11):
            for k in range(2 ** m):
                I = dyadic_interval(0.1, m, k)
                try:
                    T = canonical_transform(phi, I)
                except CoarseTransform:
                    skipped += 1
                    continue
                worst = max(worst, normalization_error(phi, I, T))
                n += 1
    slopes = []
    for c in (0.37, 1.2, 2.9):
        phi = rotation(c)
        devs, ells = [], []
        for m in range(4, 12, 2):
            I = dyadic_interval(0.0, m, 2 ** m // 3)
            recs = corner_positions(phi, I)
            devs.append(max(max(r.dev1, r.dev2) for r in recs))
            ells.append(I.length)
        slopes.append(float(np.polyfit(np.log(ells), np.log(devs), 1)[0]))
    ok = worst <= 1e-10 and min(slopes) >= 1.9
    assert report("C7 normalization and corners", ok,
                  f"max normalization error {worst:.1e} over {n} transforms "
                  f"({skipped} too coarse to normalise); corner slopes "
                  f"{', '.join(f'{s:.2f}' for s in slopes)} (>=1.9)")


# ---------------------------------------------------------------------------
# 8. chart identities
# ---------------------------------------------------------------------------

def test_c8_charts():
    rng = np.random.default_rng(8)
    iso = rt = fd = 0.0
    for _ in range(1000):
        A, M, N = random_sl2(rng), random_sl2(rng), random_sl2(rng)
        B = rng.normal(size=(2, 2))
        iso = max(iso, abs(mat_inner(isom_action(M, N, A), isom_action(M, N, B)) - mat_inner(A, B))
                  / (1 + abs(mat_inner(A, B))))
        x = random_ads_point(rng)
        y = kleinian(x)
        assert klein_form(y) < 1
        rt = max(rt, float(np.max(np.abs(kleinian_inverse(y) - x))) / max(1.0, float(np.abs(x).max())))
        assert abs(inner22(x, x) + 1) < 1e-9
        x1, x2 = rng.uniform(-3, 3, 2)
        th = rng.uniform(0, 2 * PI)
        v = (math.cos(th), math.sin(th))
        fd = max(fd, abs(ein_metric_fd(x1, x2, v, h=1e-5) - v[0] * v[1]))
    table = {(1, 1): "spacelike", (-1, -1): "spacelike", (1, -1): "timelike", (-1, 1): "timelike",
             (1, 0): "lightlike", (0, 1): "lightlike", (-1, 0): "lightlike", (0, -1): "lightlike"}
    causal_ok = True
    for (s1, s2), want in table.items():
        for a, b in rng.uniform(1e-3, 10, size=(50, 2)):
            causal_ok &= causal_type((s1 * a, s2 * b)) == want
    ok = iso < 1e-9 and rt < 1e-9 and fd < 1e-9 and causal_ok
    assert report("C8 chart identities", ok,
                  f"isometry {iso:.1e}, Kleinian round trip {rt:.1e}, metric FD {fd:.1e} (<1e-9 each, "
                  f"1000 samples); causal quadrant table {'exact' if causal_ok else 'MISMATCH'}")


# ---------------------------------------------------------------------------
# 9. lambda <-> mu dictionary
# ---------------------------------------------------------------------------

def test_c9_dictionary():
    lam = np.linspace(0.0, 1.0, 1000, endpoint=False)
    rt = float(np.max(np.abs(lambda_from_mu(mu_from_lambda(lam)) - lam)))
    spot = max(abs(mu_from_lambda(0.5) - 16 / 25), abs(mu_tilde_sq(0.5) - 12 / 25))
    rng = np.random.default_rng(9)
    pb = 0.0
    J0 = np.array([[0.0, -1.0], [1.0, 0.0]])
    for _ in range(200):
        L = np.tril(rng.normal(size=(2, 2)))
        L[[0, 1], [0, 1]] = np.abs(L[[0, 1], [0, 1]]) + 0.1
        g = L @ L.T
        Jc = np.linalg.inv(L.T) @ J0 @ L.T
        pm = pullback_metrics(g, Jc, np.zeros((2, 2)))
        pb = max(pb, float(np.max(np.abs(pm.g_l - g))), float(np.max(np.abs(pm.g_r - g))))
    ok = rt < 1e-10 and spot < 1e-12 and pb < 1e-10
    assert report("C9 lambda-mu dictionary", ok,
                  f"round trip {rt:.1e} (<1e-10, 1000 points); spot values {spot:.1e} (<1e-12); "
                  f"A=0 pullback {pb:.1e} (<1e-10)")


# ---------------------------------------------------------------------------
# 10. limiting domain
# ---------------------------------------------------------------------------

def test_c10_limiting_domain():
    a, b = limiting_domain(), limiting_domain()
    inside = a.boundary * 0.5
    n_in = sum(a.contains(y1, y2) for y1, y2 in inside)
    same = a.r == b.r and np.array_equal(a.radius, b.radius)
    ok = 0 < a.r < 1 and n_in > 0 and same
    assert report("C10 limiting domain", ok,
                  f"r = {a.r:.6f} in (0, 1); {n_in} of {len(inside)} sample points inside; "
                  f"{'deterministic' if same else 'NOT deterministic'}")


if __name__ == "__main__":
    import tempfile
    import pathlib

    failed = 0
    for name, fn in sorted((k, v) for k, v in globals().items() if k.startswith("test_c")):
        try:
            if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(pathlib.Path(d))
            else:
                fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
