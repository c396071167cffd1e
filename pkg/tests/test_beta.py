import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from wpdiag.beta import (
    beta_number, beta_sum, best_linear_linf, check_level, dyadic_beta, gamma, level_stats,
    pair_checks, qs_number, tail_verdict,
)
from wpdiag.homeo import PI, CircleHomeo, Interval, dyadic_interval, dyadic_level, make_homeo, pwl_equal

KINK_BREAK = PI * (math.sqrt(2) - 1)


def square_map():
    # not a circle map, only used on [0, 1] as a best-line fixture
    return CircleHomeo(lift_fn=lambda x: x * x, lip=2.0, tag="square")


def brute_force_line(f, lo, hi, n=20001, breaks=()):
    """Minimax line on a fine grid (plus kinks) by direct 1-D convex minimisation.

    For a fixed slope g the best intercept gives E(g) = (max r - min r) / 2 with
    r = y - g x; E is convex in g, so a bounded scalar search finds its minimum.
    """
    x = np.linspace(lo, hi, n)
    if len(breaks):
        x = np.sort(np.concatenate([x, [b for b in breaks if lo < b < hi]]))
    y = f(x)
    xc = x - 0.5 * (lo + hi)

    def E(g):
        r = y - g * xc
        return 0.5 * (r.max() - r.min())

    chord = (y[-1] - y[0]) / (hi - lo)
    res = minimize_scalar(E, bounds=(0.0, 4 * chord + 4), method="bounded",
                          options={"xatol": 1e-13, "maxiter": 2000})
    return float(res.fun), float(res.x)


def lifted_breaks(phi, lo, hi):
    out = []
    for b in phi.breaks:
        k0 = math.floor((lo - b) / PI)
        out += [b + k * PI for k in range(k0, k0 + int((hi - lo) / PI) + 3)]
    return out


def test_linear_is_exact():
    phi = make_homeo("rot:0.3")
    bl = best_linear_linf(phi, Interval(0.1, 0.9))
    assert bl.gamma == pytest.approx(1.0)
    assert bl.E0 == pytest.approx(0.0, abs=1e-14)
    assert bl(0.5) == pytest.approx(0.8)


def test_square_chebyshev():
    bl = best_linear_linf(square_map(), Interval(0.0, 1.0))
    assert bl.E0 == pytest.approx(1 / 8, rel=1e-10)
    assert bl.gamma == pytest.approx(1.0, rel=1e-10)
    assert bl.intercept == pytest.approx(-1 / 8, abs=1e-10)
    signs = [s for _, s in bl.witnesses]
    assert all(a * b < 0 for a, b in zip(signs, signs[1:]))
    # grid LP style cross-check
    E, g = brute_force_line(lambda x: x * x, 0.0, 1.0, n=10_001)
    assert E == pytest.approx(1 / 8, abs=1e-8)
    assert g == pytest.approx(1.0, abs=1e-6)


def test_kink_symmetric():
    phi = pwl_equal(KINK_BREAK, [1.5, 0.5])
    h = 0.05
    I = Interval(KINK_BREAK + PI / 2 - h, KINK_BREAK + PI / 2 + h)   # kink 1.5 -> 0.5 at the centre
    bl = best_linear_linf(phi, I)
    assert bl.gamma == pytest.approx(1.0, rel=1e-9)
    assert bl.E0 == pytest.approx(h / 4, rel=1e-9)
    assert beta_number(phi, I) == pytest.approx(1 / 8, rel=1e-9)
    assert qs_number(phi, I) == pytest.approx(1 / 4, rel=1e-9)


def test_rotation_numbers():
    phi = make_homeo("rot:0.7")
    I = dyadic_interval(0.0, 3, 2)
    assert dyadic_beta(phi, I) == pytest.approx(0.0, abs=1e-13)
    assert gamma(phi, I.interval) == pytest.approx(1.0)
    assert qs_number(phi, I.interval) == pytest.approx(0.0, abs=1e-13)


def test_gamma_positive_and_bounded():
    phi = make_homeo("trig:0.3")
    for I in dyadic_level(0.0, 4):
        b = dyadic_beta(phi, I)
        g = gamma(phi, I.interval)
        ratio = (phi(I.hi) - phi(I.lo)) / I.length
        assert b < 0.5 and g > 0
        assert (1 - 2 * b) * ratio <= g + 1e-12 <= (1 + 2 * b) * ratio + 2e-12


def test_qs_le_2beta_trig_depth6():
    st = level_stats(make_homeo("trig:0.3"), 0.0, 6)
    assert len(st.qs) == 64
    assert np.all(st.qs <= 2 * st.beta + 1e-12)


def test_mobius_beta_decay():
    phi = make_homeo("mobius:2,1,0.5,0.75")
    I = dyadic_interval(0.2, 14, 4000)
    chain = [I] + I.chain()
    ms = [J.m for J in chain if J.m >= 8]
    bs = [dyadic_beta(phi, J) for J in chain if J.m >= 8]
    slope = np.polyfit(np.log(PI * 2.0 ** -np.array(ms)), np.log(bs), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.05)


def test_beta_sum_examples():
    assert beta_sum(make_homeo("rot:0.4"), max_depth=6).verdict == "converging"
    assert all(s == 0 for s in beta_sum(make_homeo("rot:0.4"), max_depth=6).per_depth)
    rep = beta_sum(make_homeo("trig:0.3"), max_depth=9)
    assert rep.verdict == "converging"
    assert rep.ratios[-1] == pytest.approx(0.5, abs=0.05)
    rep = beta_sum(make_homeo("pwl:;1.5,0.5"), max_depth=9)
    assert rep.verdict == "diverging"
    assert min(rep.per_depth[3:]) > 0.5 / 64
    with pytest.raises(ValueError):
        beta_sum(make_homeo("rot:0"), max_depth=30)


def test_tail_verdict():
    assert tail_verdict([1, 0.5, 0.25, 0.125])[0] == "converging"
    assert tail_verdict([1, 1, 1, 1])[0] == "diverging"
    assert tail_verdict([0, 0, 0, 0])[0] == "converging"


@pytest.mark.parametrize("spec", ["trig:0.3", "mobius:2,1,0.5,0.75", "pwl:;1.5,0.5",
                                  "compose:trig:0.2|mobius:1,0.5,0,1"])
def test_monitored_inequalities(spec):
    phi = make_homeo(spec)
    prev = None
    for m in range(0, 8):
        st = level_stats(phi, 0.3, m)
        assert check_level(st) == []
        if prev is not None:
            for name, (n, bad) in pair_checks(prev, st).items():
                assert bad == [], name
        prev = st


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["trig:0.3", "trig:-0.45", "mobius:2,1,0.5,0.75", "pwl:;1.5,0.5",
                        "pwl:0.2;2,0.5,1.25,0.25"]),
       st.floats(-3, 3), st.floats(1e-3, 1.5))
def test_best_line_vs_brute_force(spec, lo, w):
    phi = make_homeo(spec)
    bl = best_linear_linf(phi, Interval(lo, lo + w))
    x = np.linspace(lo, lo + w, 20001)
    r = phi(x) - bl(x)
    # the line really attains its error, and nothing does better on a fine grid
    assert np.max(np.abs(r)) <= bl.E0 * (1 + 1e-8) + 1e-13
    E, _ = brute_force_line(phi.lift, lo, lo + w, breaks=lifted_breaks(phi, lo, lo + w))
    assert bl.E0 == pytest.approx(E, abs=1e-8)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["trig:0.3", "mobius:2,1,0.5,0.75", "pwl:;1.5,0.5"]),
       st.floats(-3, 3), st.floats(1e-3, 0.5))
def test_beta_restriction_and_bounds(spec, c, r):
    phi = make_homeo(spec)
    I = Interval(c - r, c + r)
    big = I.scale(3.0)
    b, B = beta_number(phi, I), beta_number(phi, big)
    assert 0 <= b < 0.5 and 0 <= B < 0.5
    assert qs_number(phi, I) <= 2 * b + 1e-12
    small = b * (phi(I.hi) - phi(I.lo))
    large = B * (phi(big.hi) - phi(big.lo))
    assert small <= large + 1e-13
