"""Beta numbers via L-infinity best linear approximation.

For an interval I the best linear estimator a_I(x) = gamma x + delta
minimizes max_I |phi^ - a|; its error E0 normalized by l(phi(I)) is the
beta number.  The solver is a discrete Remez exchange (three alternation
points for a two-parameter family) run on a grid, followed by zoomed
refinement around the largest residuals until E0 stabilizes.  All intervals
of a dyadic level are processed together as rows of one array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .homeo import PI, CircleHomeo, DyadicInterval, Interval, level_endpoints

# relative rounding level of a lift value (a few ulps)
ULP_FACTOR = 1e-15


# ---------------------------------------------------------------------------
# vectorized best-line solver
# ---------------------------------------------------------------------------

def _breaks_in(phi: CircleHomeo, lo, hi):
    """Lifted breakpoints of phi inside each [lo, hi], padded by clipping."""
    if len(phi.breaks) == 0:
        return np.zeros((len(lo), 0))
    L = float(np.max(hi - lo))
    reps = int(math.ceil(L / PI)) + 1
    cols = []
    for b in phi.breaks:
        first = b + PI * np.ceil((lo - b) / PI)
        for j in range(reps):
            cols.append(first + j * PI)
    B = np.column_stack(cols)
    return np.clip(B, lo[:, None], hi[:, None])


def _remez(X, Y, scale, max_iter=60):
    """Discrete minimax line for each row of sorted (X, Y).

    Returns (gamma, delta, h, ref) with ref the (R, 3) alternation indices.
    """
    R, n = X.shape
    rows = np.arange(R)
    ref = np.column_stack([np.zeros(R, int), np.full(R, n // 2), np.full(R, n - 1)])
    floor = 1e-16 * scale
    for _ in range(max_iter):
        x0, x1, x2 = (X[rows, ref[:, j]] for j in range(3))
        y0, y1, y2 = (Y[rows, ref[:, j]] for j in range(3))
        dx = x2 - x0
        g = np.where(dx > 0, (y2 - y0) / np.where(dx > 0, dx, 1.0), 0.0)
        u0 = y0 - g * x0
        u1 = y1 - g * x1
        h = 0.5 * (u0 - u1)
        d = 0.5 * (u0 + u1)
        r = Y - g[:, None] * X - d[:, None]
        k = np.argmax(np.abs(r), axis=1)
        rk = r[rows, k]
        done = np.abs(rk) <= np.abs(h) * (1 + 1e-13) + floor
        if np.all(done):
            break
        s0 = np.sign(h)
        s0 = np.where(s0 == 0, np.sign(rk), s0)
        sk = np.sign(rk)
        i0, i1, i2 = ref[:, 0].copy(), ref[:, 1].copy(), ref[:, 2].copy()
        new = ref.copy()
        # k left of i0
        c = (~done) & (k < i0)
        same = sk == s0
        new[c & same, 0] = k[c & same]
        m = c & ~same
        new[m] = np.column_stack([k[m], i0[m], i1[m]])
        # between i0 and i1
        c = (~done) & (k >= i0) & (k <= i1)
        new[c & same, 0] = k[c & same]
        new[c & ~same, 1] = k[c & ~same]
        # between i1 and i2 (sign of i1 is -s0)
        c = (~done) & (k > i1) & (k <= i2)
        new[c & ~same, 1] = k[c & ~same]
        new[c & same, 2] = k[c & same]
        # right of i2 (sign of i2 is s0)
        c = (~done) & (k > i2)
        new[c & same, 2] = k[c & same]
        m = c & ~same
        new[m] = np.column_stack([i1[m], i2[m], k[m]])
        ref = new
    x0, x1, x2 = (X[rows, ref[:, j]] for j in range(3))
    y0, y1, y2 = (Y[rows, ref[:, j]] for j in range(3))
    dx = x2 - x0
    g = np.where(dx > 0, (y2 - y0) / np.where(dx > 0, dx, 1.0), 0.0)
    u0 = y0 - g * x0
    u1 = y1 - g * x1
    return g, 0.5 * (u0 + u1), 0.5 * (u0 - u1), ref


@dataclass
class BestLines:
    """Row-wise best lines for intervals [lo, hi]; x measured from the centre."""
    lo: np.ndarray
    hi: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray          # line value at the centre of the interval
    E0: np.ndarray
    wit_x: np.ndarray          # (R, 3) alternation points
    wit_sign: np.ndarray       # (R, 3) residual signs
    h_final: float             # finest local spacing used relative to the interval length


def best_lines(phi: CircleHomeo, lo, hi, n: int = 129, n_cand: int = 6,
               n_local: int = 17, zoom: float = 8.0, rtol: float = 1e-10,
               max_refine: int = 12) -> BestLines:
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    L = hi - lo
    c = 0.5 * (lo + hi)
    t = np.linspace(0.0, 1.0, n)
    X = lo[:, None] + L[:, None] * t[None, :]
    X = np.concatenate([X, _breaks_in(phi, lo, hi)], axis=1)
    X.sort(axis=1)
    Y = phi.lift_fn(X)
    # work in centred coordinates for conditioning
    Xc = X - c[:, None]
    Yc = Y - phi.lift_fn(c)[:, None]
    # absolute rounding level of the lift values (the centring subtraction
    # cannot remove the error already present in phi^(x))
    scale = 4.0 * np.maximum(np.abs(Y).max(axis=1), 1e-300)
    g, d, hlev, ref = _remez(Xc, Yc, scale)
    E = np.abs(Yc - g[:, None] * Xc - d[:, None]).max(axis=1)
    step = 1.0 / (n - 1)
    local = np.linspace(-1.0, 1.0, n_local)
    rounds = 0
    for _ in range(max_refine):
        r = np.abs(Yc - g[:, None] * Xc - d[:, None])
        # candidates: the largest discrete local maxima of |r| (one per peak)
        pad = np.pad(r, ((0, 0), (1, 1)), constant_values=-1.0)
        # strict on the left so a run of duplicates (clipped points) counts once
        peak = (r > pad[:, :-2]) & (r >= pad[:, 2:])
        score = np.where(peak, r, -1.0)
        kc = min(n_cand, r.shape[1])
        cand = np.argpartition(-score, kc - 1, axis=1)[:, :kc]
        xc = np.take_along_axis(Xc, cand, axis=1)
        newx = (xc[:, :, None] + (step * L)[:, None, None] * local[None, None, :]).reshape(len(L), -1)
        newx = np.clip(newx, (lo - c)[:, None], (hi - c)[:, None])
        newy = phi.lift_fn(newx + c[:, None]) - phi.lift_fn(c)[:, None]
        Xc = np.concatenate([Xc, newx], axis=1)
        Yc = np.concatenate([Yc, newy], axis=1)
        order = np.argsort(Xc, axis=1, kind="stable")
        Xc = np.take_along_axis(Xc, order, axis=1)
        Yc = np.take_along_axis(Yc, order, axis=1)
        g, d, hlev, ref = _remez(Xc, Yc, scale)
        E_new = np.abs(Yc - g[:, None] * Xc - d[:, None]).max(axis=1)
        change = np.abs(E_new - E)
        E = E_new
        step /= zoom
        rounds += 1
        # a stable E alone is not enough: the true peak may sit between the
        # current points, so also require the curvature bound on the gap
        h = step * L
        if phi.curv is not None:
            gap = phi.curv * h * h / 8.0
        else:
            gap = np.where(rounds >= 4, 0.0, np.inf)
        tol = rtol * E + 1e-16 * scale
        if np.all((change <= tol) & (gap <= tol)):
            break
    rows = np.arange(len(L))
    wx = np.take_along_axis(Xc, ref, axis=1)
    wy = np.take_along_axis(Yc, ref, axis=1)
    ws = np.sign(wy - g[:, None] * wx - d[:, None])
    return BestLines(lo, hi, g, d + phi.lift_fn(c), E, wx + c[:, None], ws, step)


@dataclass
class BestLine:
    gamma: float
    intercept: float           # a(x) = gamma * x + intercept
    E0: float
    witnesses: list            # [(x, sign), ...] alternating residual signs

    def __call__(self, x):
        return self.gamma * np.asarray(x) + self.intercept


def best_linear_linf(phi: CircleHomeo, interval, **kw) -> BestLine:
    lo, hi = float(interval.lo), float(interval.hi)
    if not hi > lo:
        raise ValueError("interval is degenerate")
    b = best_lines(phi, [lo], [hi], **kw)
    c = 0.5 * (lo + hi)
    g = float(b.gamma[0])
    return BestLine(g, float(b.delta[0]) - g * c, float(b.E0[0]),
                    [(float(x), float(s)) for x, s in zip(b.wit_x[0], b.wit_sign[0])])


def beta_number(phi: CircleHomeo, I) -> float:
    bl = best_linear_linf(phi, I)
    return bl.E0 / float(phi.lift(I.hi) - phi.lift(I.lo))


def gamma(phi: CircleHomeo, I) -> float:
    return best_linear_linf(phi, I).gamma


def qs_number(phi: CircleHomeo, I) -> float:
    a, b = phi.lift(I.lo), phi.lift(I.hi)
    m = phi.lift(0.5 * (I.lo + I.hi))
    return abs(m - 0.5 * (a + b)) / (b - a)


# ---------------------------------------------------------------------------
# per-level statistics and beta sums
# ---------------------------------------------------------------------------

@dataclass
class LevelStats:
    """Everything computed for the 2^m intervals of one dyadic level."""
    x0: float
    m: int
    lam: float
    lo: np.ndarray
    hi: np.ndarray
    im_len: np.ndarray          # l(phi(I))
    beta: np.ndarray            # beta(I)
    gamma: np.ndarray           # gamma(I)
    E0: np.ndarray
    qs: np.ndarray
    lam_im_len: np.ndarray      # l(phi(lam I))
    beta_lam: np.ndarray        # beta(lam I)
    gamma_lam: np.ndarray
    E0_lam: np.ndarray
    noise: np.ndarray           # absolute rounding level of the lift values

    @property
    def length(self) -> float:
        return PI * 2.0 ** (-self.m)


def level_stats(phi: CircleHomeo, x0: float, m: int, lam: float = 3.0, **kw) -> LevelStats:
    ends = level_endpoints(x0, m)
    lo, hi = ends[:-1], ends[1:]
    fe = phi.lift_fn(ends)
    im = np.diff(fe)
    mid = 0.5 * (lo + hi)
    qs = np.abs(phi.lift_fn(mid) - 0.5 * (fe[:-1] + fe[1:])) / im
    b = best_lines(phi, lo, hi, **kw)
    if lam == 1.0:
        bl, iml = b, im
    else:
        r = 0.5 * lam * (hi - lo)
        llo, lhi = mid - r, mid + r
        bl = best_lines(phi, llo, lhi, **kw)
        iml = phi.lift_fn(lhi) - phi.lift_fn(llo)
    mag = np.maximum(np.abs(bl.lo), np.abs(bl.hi)) + np.abs(phi.lift_fn(bl.hi)) + 1.0
    return LevelStats(float(x0), m, float(lam), lo, hi, im, b.E0 / im, b.gamma, b.E0, qs,
                      iml, bl.E0 / iml, bl.gamma, bl.E0, ULP_FACTOR * mag)


def beta_sq_sum(st: LevelStats) -> float:
    """sum of beta(lam I)^2 over the level, values below their rounding level counted as 0."""
    floor = 4.0 * st.noise / st.lam_im_len
    return float(np.sum(np.where(st.beta_lam <= floor, 0.0, st.beta_lam) ** 2))


def tail_verdict(per_depth, theta: float = 0.7, n_tail: int = 3, zero: float = 1e-24):
    """('converging' | 'diverging', last ratios) from per-depth sums."""
    s = np.asarray(per_depth, dtype=float)
    if s.size == 0 or np.all(s[-(n_tail + 1):] <= zero):
        return "converging", []
    tail = s[-(n_tail + 1):]
    ratios = [float(b / a) if a > zero else (0.0 if b <= zero else math.inf)
              for a, b in zip(tail[:-1], tail[1:])]
    ok = all(r < theta for r in ratios)
    return ("converging" if ok else "diverging"), ratios


@dataclass
class SumReport:
    x0: float
    lam: float
    depths: list
    per_depth: list
    cumulative: list
    verdict: str
    ratios: list
    levels: list = field(default_factory=list, repr=False)


def beta_sum(phi: CircleHomeo, x0: float = 0.0, lam: float = 3.0, max_depth: int = 10,
             theta: float = 0.7, depth_guard: int = 24, keep_levels: bool = False) -> SumReport:
    """Per-depth sums s_m = sum_{I in D_m} beta(lam I)^2 and a tail-ratio verdict.

    The verdict is a finite-depth heuristic: 'converging' when the last three
    ratios s_{m+1}/s_m stay below ``theta`` (or the sums vanish).
    """
    if max_depth > depth_guard:
        raise ValueError(f"max_depth {max_depth} exceeds the guard {depth_guard}")
    if lam < 1:
        raise ValueError("multiplier must be >= 1")
    per, levels = [], []
    for m in range(max_depth + 1):
        st = level_stats(phi, x0, m, lam)
        per.append(beta_sq_sum(st))
        if keep_levels:
            levels.append(st)
    verdict, ratios = tail_verdict(per, theta)
    return SumReport(float(x0), float(lam), list(range(max_depth + 1)), per,
                     list(np.cumsum(per)), verdict, ratios, levels)


# ---------------------------------------------------------------------------
# monitored inequalities
# ---------------------------------------------------------------------------

def check_level(st: LevelStats):
    """Single-interval inequalities; returns a list of violation strings.

    Each comparison allows the rounding level ``st.noise`` of the lift values,
    propagated to the quantity being compared (e.g. noise / l(phi(I)) for beta).
    """
    bad = []
    nz = st.noise
    ratio = st.im_len / st.length
    sb = 4 * nz / st.im_len
    sg = 4 * nz / st.length
    for i in np.nonzero(~(st.beta < 0.5))[0]:
        bad.append(f"m={st.m} k={i}: beta={st.beta[i]!r} >= 1/2")
    low = (1 - 2 * st.beta) * ratio > st.gamma + sg + 2 * sb * ratio
    high = st.gamma > (1 + 2 * st.beta) * ratio + sg + 2 * sb * ratio
    for i in np.nonzero(low | high)[0]:
        bad.append(f"m={st.m} k={i}: gamma={st.gamma[i]!r} outside (1 -/+ 2 beta) * {ratio[i]!r}")
    for i in np.nonzero(st.qs > 2 * st.beta + 3 * sb)[0]:
        bad.append(f"m={st.m} k={i}: qs={st.qs[i]!r} > 2 beta={2 * st.beta[i]!r}")
    for i in np.nonzero(st.E0 > st.E0_lam + 4 * nz)[0]:
        bad.append(f"m={st.m} k={i}: E0(I)={st.E0[i]!r} > E0(lam I)={st.E0_lam[i]!r}")
    return bad


def gradient_stability(b_small, g_small, b_big, g_big, lam, sg_small=0.0, sg_big=0.0, sb_big=0.0):
    """|gamma(I)/gamma(I') - 1| <= 8 lam beta(I') whenever beta(I') <= 1/4.

    ``sg_*``/``sb_big`` are rounding allowances for the gammas and beta(I').
    Returns (number of pairs checked, list of violations)."""
    b_big = np.asarray(b_big)
    g_small = np.asarray(g_small)
    g_big = np.asarray(g_big)
    hyp = b_big <= 0.25
    lhs = np.abs(g_small / g_big - 1.0)
    rhs = 8.0 * lam * b_big
    slack = sg_small / np.abs(g_big) + sg_big * np.abs(g_small) / g_big ** 2 + 8.0 * lam * sb_big
    viol = hyp & (lhs > rhs + slack)
    return int(hyp.sum()), [f"pair {i}: {lhs[i]!r} > {rhs[i]!r}" for i in np.nonzero(viol)[0]]


def image_growth(im_small, im_big, b_big, lam, noise=0.0):
    """l(phi(I')) <= 4 lam l(phi(I)) whenever beta(I') <= 1/(16 lam)."""
    b_big = np.asarray(b_big)
    hyp = b_big <= 1.0 / (16.0 * lam)
    lhs = np.asarray(im_big)
    rhs = 4.0 * lam * np.asarray(im_small)
    viol = hyp & (lhs > rhs + 2 * (1 + 4 * lam) * noise)
    return int(hyp.sum()), [f"pair {i}: {lhs[i]!r} > {rhs[i]!r}" for i in np.nonzero(viol)[0]]


def pair_checks(parent: LevelStats, child: LevelStats):
    """Gradient-stability and image-growth checks on (child, parent) with lam = 2 and on (I, 3I) with lam = 3."""
    out = {}
    idx = np.arange(len(child.lo)) // 2
    nz = np.maximum(child.noise, parent.noise[idx])
    sg_c = 4 * nz / child.length
    sg_p = 4 * nz / parent.length
    out["gradient child/parent"] = gradient_stability(child.beta, child.gamma, parent.beta[idx], parent.gamma[idx], 2.0,
                                         sg_c, sg_p, 4 * nz / parent.im_len[idx])
    out["image child/parent"] = image_growth(child.im_len, parent.im_len[idx], parent.beta[idx], 2.0, nz)
    if child.lam == 3.0:
        nz = child.noise
        out["gradient I/3I"] = gradient_stability(child.beta, child.gamma, child.beta_lam, child.gamma_lam, 3.0,
                                     4 * nz / child.length, 4 * nz / (3 * child.length),
                                     4 * nz / child.lam_im_len)
        out["image I/3I"] = image_growth(child.im_len, child.lam_im_len, child.beta_lam, 3.0, nz)
    return out


def dyadic_beta(phi: CircleHomeo, I: DyadicInterval, lam: float = 1.0) -> float:
    J = I.interval if lam == 1.0 else I.scale(lam)
    return beta_number(phi, J)


__all__ = [
    "BestLine", "BestLines", "best_lines", "best_linear_linf", "beta_number", "gamma",
    "qs_number", "LevelStats", "level_stats", "beta_sq_sum", "beta_sum", "SumReport", "tail_verdict",
    "check_level", "gradient_stability", "image_growth", "pair_checks", "dyadic_beta", "Interval",
]
