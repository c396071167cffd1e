"""Epsilon numbers: Mobius pinching of a circle homeomorphism at a scale.

For an interval I with tripled interval 3I write L = l(3I), Lp = l(phi(3I))
and r = Lp / L.  A witness is a basepoint x in I together with Mobius maps
whose lifts satisfy f-^ <= phi^ <= f+^ on all of R.  Its defect is the
largest of the three normalised quantities

    |f^(x) - phi^(x)| / Lp,    |f^'(x) - r| / r,    |f^''(x)| L^2 / Lp

over both maps, and eps(I) is the infimum of the defects (1 when no pair
with defect below 1 exists).

Parametrisation used throughout: a witness map through the point
(x, phi^(x) + v) is written, in offset coordinates u = y - x,

    f^(y) = phi^(x) + v + G(u; s, c),

where G is the lift of the chart map t -> s t / (1 - k t), k = c / (2 s),
normalised by G(0) = 0.  Its jet at u = 0 is (0, s, c), so the defect is
max(|v| / Lp, |s / r - 1|, |c| L^2 / Lp).

Upper bounds come from an explicit search.  For fixed (v, s) the pinching
f+^ >= phi^ turns into one linear inequality in k per sample point,

    k >= 1 / tan(u) - s * cot(phi^(x + u) - phi^(x) - v),

active only where the right-hand side is a genuine constraint (see
``_search``).  This reduces the search to a bisection in eps with a short
scan in s; the resulting witness is then certified on a fine grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numba import njit

from .beta import SumReport, best_linear_linf, level_stats, tail_verdict
from .homeo import PI, CircleHomeo, DyadicInterval, Interval, level_endpoints
from .mobius import MobiusMap

HALF_PI = 0.5 * PI
DEFAULT_ETA = 0.5
X_FRACS = (0.25, 0.5, 0.75)


class LiftMismatch(ValueError):
    pass


class ScaleTooCoarse(ValueError):
    pass


class PinchFailure(ValueError):
    def __init__(self, msg, point=None):
        super().__init__(msg)
        self.point = point


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------

def _intervals(I):
    """(I, 3I) as plain intervals."""
    if isinstance(I, DyadicInterval):
        return I.interval, I.triple()
    if isinstance(I, Interval):
        return I, I.scale(3.0)
    lo, hi = I
    J = Interval(float(lo), float(hi))
    return J, J.scale(3.0)


def _scales(phi: CircleHomeo, I3: Interval):
    L = I3.length
    Lp = float(phi.lift(I3.hi) - phi.lift(I3.lo))
    return L, Lp, Lp / L


def _noise(phi_x):
    return 1e-15 * (np.abs(phi_x) + 4.0)


def chart_map(s, c):
    """The Mobius map t -> s t / (1 - k t), k = c / (2 s): jet (0, s, c) at 0."""
    k = c / (2.0 * s)
    return MobiusMap(s, 0.0, -k, 1.0)


def g_lift(u, s, c):
    """Lift G(u; s, c) of ``chart_map(s, c)`` with G(0) = 0 (vectorized)."""
    k = c / (2.0 * s)
    su, cu = np.sin(u), np.cos(u)
    cross = (s - 1.0) * su * cu + k * su * su
    dot = cu * cu - k * su * cu + s * su * su
    return u + np.arctan2(cross, dot)


def _chart_curv(s, c):
    """Bound for |G''| (see MobiusMap.lift_bounds), vectorized over (s, c)."""
    k = c / (2.0 * s)
    fro = (1.0 + k * k + s * s) / s
    s2 = 0.5 * (fro + np.sqrt(np.maximum(fro * fro - 4.0, 0.0)))
    return (s2 - 1.0 / s2) * s2 * s2


def place(m: MobiusMap, x: float, y: float):
    """The map R_y o m o R_{-x} with the lift branch sending x to y + m^(0)."""
    f = MobiusMap.rotation(y).compose(m).compose(MobiusMap.rotation(-x))
    target = y + m.lift(0.0)
    branch = int(round((target - f.lift(x)) / PI))
    return f, branch


# ---------------------------------------------------------------------------
# witnesses
# ---------------------------------------------------------------------------

@dataclass
class EpsilonWitness:
    x: float
    f_minus: MobiusMap
    f_plus: MobiusMap
    branch_minus: int = 0
    branch_plus: int = 0
    eps: float = math.nan

    def lift_minus(self, y):
        return self.f_minus.lift(y, self.branch_minus)

    def lift_plus(self, y):
        return self.f_plus.lift(y, self.branch_plus)

    def jets(self):
        """((f-, f-', f-''), (f+, f+', f+'')) of the chosen lifts at x."""
        out = []
        for f, br in ((self.f_minus, self.branch_minus), (self.f_plus, self.branch_plus)):
            d1, d2 = f.lift_derivatives(self.x)
            out.append((f.lift(self.x, br), float(d1), float(d2)))
        return tuple(out)


def defects(phi: CircleHomeo, I, w: EpsilonWitness):
    """The six normalised defects (value, slope, curvature) x (minus, plus)."""
    _, I3 = _intervals(I)
    L, Lp, r = _scales(phi, I3)
    px = phi.lift(w.x)
    out = []
    for f0, f1, f2 in w.jets():
        out.append((abs(f0 - px) / Lp, abs(f1 - r) / r, abs(f2) * L * L / Lp))
    return out


def realized_epsilon(phi: CircleHomeo, I, w: EpsilonWitness) -> float:
    return float(max(max(t) for t in defects(phi, I, w)))


@dataclass
class Feasibility:
    feasible: bool
    margin: float
    realized: float
    violation: Optional[str] = None
    point: Optional[float] = None


def certify_order(upper: Callable, lower: Callable, lo: float, hi: float, n: int = 4097,
                  extra=(), curv: Optional[float] = None, rounds: int = 10,
                  split: int = 16, noise: float = 0.0, max_points: int = 1_000_000):
    """Certified lower bound for min (upper - lower) over [lo, hi].

    Both functions must be nondecreasing.  On a cell [y_i, y_{i+1}] the gap is
    at least upper(y_i) - lower(y_{i+1}) (monotonicity: this is the modulus of
    continuity slack measured by the actual increments); when ``curv`` bounds
    |(upper - lower)''| on every cell, the gap is also at least
    min(g_i, g_{i+1}) - curv h^2 / 8.  Cells whose bound is negative while the
    sampled gap is positive are subdivided.  Returns (margin, argmin point);
    a negative sampled gap is returned as is (a genuine violation).  If the
    refinement would exceed ``max_points`` the current (negative, hence
    uncertified) bound is returned.
    """
    ys = np.linspace(lo, hi, n)
    ex = np.asarray(extra, dtype=float)
    if ex.size:
        ys = np.unique(np.concatenate([ys, ex[(ex > lo) & (ex < hi)]]))
    for _ in range(rounds):
        U = np.asarray(upper(ys), dtype=float)
        W = np.asarray(lower(ys), dtype=float)
        g = U - W
        i = int(np.argmin(g))
        if g[i] < -noise:
            return float(g[i]), float(ys[i])
        lb = U[:-1] - W[1:]
        if curv is not None:
            h = np.diff(ys)
            lb = np.maximum(lb, np.minimum(g[:-1], g[1:]) - curv * h * h / 8.0)
        bad = np.nonzero(lb < -noise)[0]
        if bad.size == 0:
            # certified up to rounding: a margin inside the noise band counts as 0
            j = int(np.argmin(lb))
            return max(float(min(lb[j], g[i])), 0.0), float(ys[j])
        if ys.size + bad.size * (split - 1) > max_points:
            j = int(np.argmin(lb))
            return float(lb[j]), float(ys[j])
        t = np.linspace(0.0, 1.0, split + 1)[1:-1]
        new = (ys[bad][:, None] + np.diff(ys)[bad][:, None] * t[None, :]).ravel()
        ys = np.unique(np.concatenate([ys, new]))
    j = int(np.argmin(lb))
    return float(lb[j]), float(ys[j])


def _period_breaks(phi: CircleHomeo, lo, hi):
    b = np.asarray(phi.breaks, dtype=float)
    if b.size == 0:
        return b
    n0 = math.floor((lo - b.max()) / PI)
    n1 = math.ceil((hi - b.min()) / PI)
    pts = (b[None, :] + PI * np.arange(n0, n1 + 1)[:, None]).ravel()
    return pts[(pts > lo) & (pts < hi)]


def _same_map(phi: CircleHomeo, f: MobiusMap, branch: int) -> bool:
    if phi.mobius is None or not f.close_to(phi.mobius, 1e-14):
        return False
    return abs(f.lift(0.3, branch) - phi.lift(0.3)) < 1e-12


def pinch_margins(phi: CircleHomeo, w: EpsilonWitness, n: int = 4097, n_loc: int = 1025,
                  width: Optional[float] = None):
    """Certified margins (min f+^ - phi^, min phi^ - f-^) over one period."""
    x = w.x
    lo, hi = x - HALF_PI, x + HALF_PI
    extra = list(_period_breaks(phi, lo, hi))
    if width is not None:
        extra += list(np.linspace(max(lo, x - width), min(hi, x + width), n_loc))
    noise = float(_noise(phi.lift(x)))
    out = []
    for f, br, sign in ((w.f_plus, w.branch_plus, 1), (w.f_minus, w.branch_minus, -1)):
        if _same_map(phi, f, br):
            out.append((0.0, x))
            continue
        curv = None
        if phi.curv is not None:
            curv = phi.curv + f.lift_bounds()[1]
        fl = (lambda y, f=f, br=br: f.lift(y, br))
        if sign > 0:
            out.append(certify_order(fl, phi.lift_fn, lo, hi, n, extra, curv, noise=noise))
        else:
            out.append(certify_order(phi.lift_fn, fl, lo, hi, n, extra, curv, noise=noise))
    return out


def witness_feasible(phi: CircleHomeo, I, w: EpsilonWitness, eps: float) -> Feasibility:
    """Check the jet conditions at x exactly and the global pinching with a certificate."""
    J, I3 = _intervals(I)
    px = phi.lift(w.x)
    fm, fp = w.lift_minus(w.x), w.lift_plus(w.x)
    if fm > fp + 1e-15 or abs(fm - px) >= HALF_PI or abs(fp - px) >= HALF_PI:
        raise LiftMismatch("witness lifts are not on the sheet of phi^ at x")
    if not J.contains(w.x, 1e-15):
        return Feasibility(False, -math.inf, math.nan, "basepoint outside I", w.x)
    names = ("value", "slope", "curvature")
    realized = 0.0
    for side, d in zip(("minus", "plus"), defects(phi, I, w)):
        for nm, val in zip(names, d):
            realized = max(realized, val)
            if val > eps * (1 + 1e-12) + 1e-15:
                return Feasibility(False, eps - val, realized, f"{nm} defect of f_{side}", w.x)
    (mp, xp), (mm, xm) = pinch_margins(phi, w, width=2.0 * J.length)
    if mp < 0 or mm < 0:
        side, pt, m = ("plus", xp, mp) if mp <= mm else ("minus", xm, mm)
        return Feasibility(False, m, realized, f"pinching fails for f_{side}", pt)
    return Feasibility(True, min(mp, mm), realized)


# ---------------------------------------------------------------------------
# the vectorized search
# ---------------------------------------------------------------------------

def _offsets(ell: float, n_loc: int = 193, n_far: int = 40, n_uni: int = 256):
    """Sample offsets u in (-pi/2, pi/2]: dense near 0, geometric and uniform far out."""
    w = min(6.0 * ell, HALF_PI - 1e-9)
    loc = np.linspace(-w, w, n_loc)
    parts = [loc]
    if w < HALF_PI * 0.9:
        far = np.geomspace(w * 1.05, HALF_PI - 1e-9, n_far)
        uni = np.linspace(-HALF_PI + 1e-9, HALF_PI - 1e-9, n_uni)
        parts += [-far, far, uni[np.abs(uni) > w]]
    u = np.unique(np.concatenate(parts))
    return u[u != 0.0]


@njit(cache=True)
def _row_feasible(Ph, U, A, M, use_mask, eps, r, L, Lp, centre, half, t, K):
    """Feasibility of one row at defect level eps; returns (ok, s)."""
    v = eps * Lp
    n_s = t.shape[0]
    for i in range(n_s):
        K[i] = -np.inf
    for j in range(Ph.shape[0]):
        if use_mask and not M[j]:
            continue
        th = Ph[j] - v
        u = U[j]
        if u > 0.0:
            if th <= 0.0:
                continue
        elif not (th < 0.0 and th > -HALF_PI):
            continue
        b = 1.0 / math.tan(th)
        aj = A[j]
        for i in range(n_s):
            val = aj - (centre + half * t[i]) * b
            if val > K[i]:
                K[i] = val
    cmax = eps * Lp / (L * L)
    best = -np.inf
    s_best = np.nan
    for i in range(n_s):
        s = centre + half * t[i]
        if s <= 0.0 or abs(s / r - 1.0) > eps * (1 + 1e-12):
            continue
        cmin = 2.0 * s * max(K[i], 0.0)
        if cmin <= cmax and cmax - cmin > best:
            best = cmax - cmin
            s_best = s
    return best > -np.inf, s_best


@njit(cache=True)
def _search_kernel(Phi, U, A, M, use_mask, r, L, Lp, t, it0, it1, eps_out, s_out):
    n_s = t.shape[0]
    K = np.empty(n_s)
    for p in range(Phi.shape[0]):
        Ph, Up, Ap, Mp = Phi[p], U[p], A[p], M[p]
        ok, s_hi = _row_feasible(Ph, Up, Ap, Mp, use_mask, 1.0, r[p], L[p], Lp[p],
                                 r[p], r[p] * (1 - 1e-9), t, K)
        if not ok:
            eps_out[p] = 1.0
            s_out[p] = np.nan
            continue
        lo, hi = 0.0, 1.0
        for _ in range(it0):
            mid = 0.5 * (lo + hi)
            ok, s = _row_feasible(Ph, Up, Ap, Mp, use_mask, mid, r[p], L[p], Lp[p],
                                  r[p], r[p] * mid, t, K)
            if ok:
                hi, s_hi = mid, s
            else:
                lo = mid
        centre, half = s_hi, 2.0 * hi * r[p] / (n_s - 1)
        lo = 0.0
        for _ in range(it1):
            mid = 0.5 * (lo + hi)
            ok, s = _row_feasible(Ph, Up, Ap, Mp, use_mask, mid, r[p], L[p], Lp[p],
                                  centre, half, t, K)
            if ok:
                hi, s_hi = mid, s
            else:
                lo = mid
        eps_out[p] = hi
        s_out[p] = s_hi


def _search(Phi, U, r, L, Lp, mask=None, n_s: int = 9, iters=(20, 12)):
    """Smallest eps (per row) found feasible; also the slope s realising it.

    For each row this bisects on eps, testing a grid of slopes s around r;
    a second round refines the slope grid around the first answer.  Rows
    with no feasible point at eps = 1 get eps = 1 and s = nan.

    Feasibility of the pinching f+^ >= phi^ at level eps: with v = eps Lp
    and theta = phi^(x+u) - phi^(x) - v, the condition at u is
    k >= a(u) - s b(u), a = 1/tan u, b = cot theta, whenever u > 0 and
    theta > 0, or u < 0 and -pi/2 < theta < 0; other sample points impose
    nothing (the map is above phi^ there for every k >= 0).  The best c is
    then c_min = 2 s max(0, max_u (a - s b)) and feasibility asks
    c_min <= eps Lp / L^2 for some s with |s/r - 1| <= eps.
    """
    Phi = np.ascontiguousarray(Phi, dtype=float)
    P = Phi.shape[0]
    U2 = np.broadcast_to(U, Phi.shape)
    A2 = 1.0 / np.tan(U2)
    use_mask = mask is not None
    M2 = np.broadcast_to(mask if use_mask else np.ones(1, dtype=bool), Phi.shape)
    eps_out = np.ones(P)
    s_out = np.full(P, np.nan)
    _search_kernel(Phi, U2, A2, M2, use_mask, np.asarray(r, float), np.asarray(L, float),
                   np.asarray(Lp, float), np.linspace(-1.0, 1.0, n_s),
                   int(iters[0]), int(iters[1]), eps_out, s_out)
    return eps_out, s_out


def _cell_bounds(phi_u, G, u, curv):
    """Upper bounds for E = phi_u - G on each cell (monotone and C^2 forms)."""
    E = phi_u - G
    ub = E[..., :-1] + np.diff(phi_u, axis=-1)          # phi(u_{i+1}) - G(u_i)
    if curv is not None:
        h = np.diff(u, axis=-1)
        ub = np.minimum(ub, np.maximum(E[..., :-1], E[..., 1:]) + curv * h * h / 8.0)
    return E, ub


def _verify(phi: CircleHomeo, x, sign, s, c, ell, block: int = 256, **kw):
    """Blockwise :func:`_verify_rows` (bounds the size of the refinement arrays)."""
    out_v, out_u = np.empty(len(x)), np.empty(len(x))
    for b in range(0, len(x), block):
        sl = slice(b, b + block)
        out_v[sl], out_u[sl] = _verify_rows(phi, x[sl], sign[sl], s[sl], c[sl], ell, **kw)
    return out_v, out_u


def _verify_rows(phi: CircleHomeo, x, sign, s, c, ell, n: int = 2049, n_loc: int = 513,
                 top: int = 256, sub: int = 16):
    """Certified v needed by the parametrised witnesses (vectorized over rows).

    Returns (v_cert, u_star): v_cert >= 0 bounds sign * (phi^(y) - phi^(x)) -
    G(y - x) over a period (rows with sign -1 use the mirrored problem
    phi*(u) = -(phi^(x - u) - phi^(x))), u_star is the sampled argmax.  The
    bound is certified cell-wise; the ``top`` worst cells of every row are
    subdivided ``sub`` times before taking the maximum.
    """
    P = len(x)
    w = min(4.0 * ell, HALF_PI)
    base = np.concatenate([np.linspace(-HALF_PI, HALF_PI, n), np.linspace(-w, w, n_loc)])
    br = np.asarray(phi.breaks, dtype=float)
    sgn = sign[:, None]
    if br.size:
        ubr = np.mod(sgn * (br[None, :] - x[:, None]) + HALF_PI, PI) - HALF_PI
        u = np.concatenate([np.broadcast_to(base, (P, base.size)), ubr], axis=1)
    else:
        u = np.broadcast_to(base, (P, base.size)).copy()
    u = np.sort(u, axis=1)
    px = phi.lift_fn(x)
    curv = None
    if phi.curv is not None:
        curv = (phi.curv + _chart_curv(s, c))[:, None]
    ev = lambda uu: sgn[..., None] * (phi.lift_fn(x[:, None, None] + sgn[..., None] * uu) - px[:, None, None])
    phi_u = sgn * (phi.lift_fn(x[:, None] + sgn * u) - px[:, None])
    G = g_lift(u, s[:, None], c[:, None])
    E, ub = _cell_bounds(phi_u, G, u, curv)
    k = min(top, ub.shape[1])
    cells = np.argpartition(-ub, k - 1, axis=1)[:, :k]
    rows = np.arange(P)[:, None]
    t = np.linspace(0.0, 1.0, sub + 1)
    uu = u[rows, cells][..., None] + (u[rows, cells + 1] - u[rows, cells])[..., None] * t
    pu = ev(uu)
    gu = g_lift(uu, s[:, None, None], c[:, None, None])
    Ef, ubf = _cell_bounds(pu, gu, uu, None if curv is None else curv[..., None])
    ub[rows, cells] = ubf.max(axis=2)
    j = np.argmax(E, axis=1)
    u_star = u[np.arange(P), j]
    jf = np.unravel_index(np.argmax(Ef.reshape(P, -1), axis=1), Ef.shape[1:])
    ef = Ef[np.arange(P), jf[0], jf[1]]
    u_star = np.where(ef > E[np.arange(P), j], uu[np.arange(P), jf[0], jf[1]], u_star)
    return np.maximum(0.0, ub.max(axis=1) + 2.0 * _noise(px)), u_star


@dataclass
class EpsilonLevel:
    """Epsilon brackets for every interval of one depth."""
    x0: float
    m: int
    lo: np.ndarray
    hi: np.ndarray
    x: np.ndarray
    kind: np.ndarray            # 0: searched witness, 1: phi itself, 2: none (eps = 1)
    s_plus: np.ndarray
    c_plus: np.ndarray
    v_plus: np.ndarray
    s_minus: np.ndarray
    c_minus: np.ndarray
    v_minus: np.ndarray
    phi: CircleHomeo = field(repr=False, default=None)

    def witness(self, k: int) -> Optional[EpsilonWitness]:
        kind = int(self.kind[k])
        x = float(self.x[k])
        if kind == 2:
            return None
        if kind == 1:
            m = self.phi.mobius
            br = int(round((self.phi.lift(x) - m.lift(x)) / PI))
            return EpsilonWitness(x, m, m, br, br, float(self.hi[k]))
        px = self.phi.lift(x)
        fp, bp = place(chart_map(self.s_plus[k], self.c_plus[k]), x, px + self.v_plus[k])
        fm, bm = place(chart_map(self.s_minus[k], -self.c_minus[k]), x, px - self.v_minus[k])
        return EpsilonWitness(x, fm, fp, bm, bp, float(self.hi[k]))


def _mobius_candidate(phi: CircleHomeo, x, L, Lp, r):
    """Defect of the witness f+ = f- = phi (Mobius phi only)."""
    d1, d2 = phi.mobius.lift_derivatives(x)
    out = np.maximum(np.abs(d1 / r - 1.0), np.abs(d2) * L * L / Lp)
    # r and the derivatives carry the rounding of the lift values
    floor = 4.0 * _noise(phi.lift_fn(x)) / Lp
    return np.where(out <= floor, 0.0, out)


def epsilon_intervals(phi: CircleHomeo, lo, hi, x_fracs: Sequence[float] = X_FRACS,
                      n_s: int = 9, cut_rounds: int = 3) -> dict:
    """Vectorized epsilon brackets for intervals [lo_i, hi_i] of a common length.

    For every basepoint on the grid ``x_fracs`` of I the search gives the
    defect of the best sampled pair; the best basepoint is then certified,
    and sample points near the worst certified violation are added (cutting
    planes) for a few rounds.  hi is the realised defect of the certified
    pair, lo the minimum over basepoints of the 3I-restricted search.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    R = lo.size
    ell = float(hi[0] - lo[0])
    mid = 0.5 * (lo + hi)
    lo3, hi3 = mid - 1.5 * ell, mid + 1.5 * ell
    L = np.full(R, 3.0 * ell)
    Lp = phi.lift_fn(hi3) - phi.lift_fn(lo3)
    r = Lp / L
    fr = np.asarray(x_fracs, dtype=float)
    X = lo[:, None] + ell * fr[None, :]             # (R, nx)
    nx = fr.size
    U = _offsets(ell)
    xs = np.repeat(X.ravel(), 2)
    sign = np.tile([1.0, -1.0], R * nx)
    rep = lambda q: np.repeat(q, 2 * nx)
    Lr, Lpr, rr = rep(L), rep(Lp), rep(r)
    px = phi.lift_fn(xs)
    Phi = sign[:, None] * (phi.lift_fn(xs[:, None] + sign[:, None] * U[None, :]) - px[:, None])
    eps_full, s_full = _search(Phi, U, rr, Lr, Lpr, None, n_s)
    # relaxation: constraints restricted to 3I (mirrored for the lower map)
    y = xs[:, None] + sign[:, None] * U[None, :]
    inside = (y >= rep(lo3)[:, None]) & (y <= rep(hi3)[:, None])
    eps_loc, _ = _search(Phi, U, rr, Lr, Lpr, inside, n_s)
    eps_loc = np.minimum(eps_loc, eps_full)

    ef = eps_full.reshape(R, nx, 2)
    el = eps_loc.reshape(R, nx, 2).max(axis=2)
    opt = ef.max(axis=2)                            # both maps share x
    mob = None
    if phi.mobius is not None:
        mob = _mobius_candidate(phi, X, L[:, None], Lp[:, None], r[:, None])
        el = np.minimum(el, mob)
    lo_eps = el.min(axis=1)
    ar = np.arange(R)
    jbest = np.argmin(opt, axis=1)
    xb = X[ar, jbest]
    rows = (2 * (ar * nx + jbest))[:, None] + np.array([0, 1])[None, :]
    rows = rows.ravel()                             # (2R,) plus/minus rows of best x
    e_row, s_row = eps_full[rows], s_full[rows]
    xr, sg = xs[rows], sign[rows]
    Lr2, Lpr2, rr2 = np.repeat(L, 2), np.repeat(Lp, 2), np.repeat(r, 2)
    Ur = np.broadcast_to(U, (rows.size, U.size))
    Phr = Phi[rows]
    h_cut = PI / 2048
    v_row = np.zeros(rows.size)
    for rnd in range(cut_rounds + 1):
        live = e_row < 1.0
        c_row = np.where(live, e_row * Lpr2 / Lr2 ** 2, 0.0)
        v_row = np.full(rows.size, np.inf)
        if live.any():
            li = np.nonzero(live)[0]
            vv, ustar = _verify(phi, xr[li], sg[li], s_row[li], c_row[li], ell)
            v_row[li] = vv
        need = live & (v_row > e_row * Lpr2 * 1.05 + 1e-300)
        if rnd == cut_rounds or not need.any():
            break
        cut = np.clip(ustar[:, None] + h_cut * np.linspace(-2, 2, 9)[None, :],
                      -HALF_PI + 1e-9, HALF_PI - 1e-9)
        add = np.zeros((rows.size, cut.shape[1]))
        add[li] = cut
        add[~live] = Ur[~live, :1]
        Ur = np.concatenate([Ur, add], axis=1)
        Phr = np.concatenate([Phr, sg[:, None] * (phi.lift_fn(xr[:, None] + sg[:, None] * add)
                                                 - phi.lift_fn(xr)[:, None])], axis=1)
        Ur = np.where(Ur == 0.0, U[0], Ur)
        idx = np.nonzero(need)[0]
        e2, s2 = _search(Phr[idx], Ur[idx], rr2[idx], Lr2[idx], Lpr2[idx], None, n_s)
        e_row[idx], s_row[idx] = e2, s2
    live = e_row < 1.0
    c_row = np.where(live, e_row * Lpr2 / Lr2 ** 2, 0.0)
    sig = np.abs(s_row / rr2 - 1.0)
    kap = c_row * Lr2 ** 2 / Lpr2
    real = np.where(live, np.maximum(np.maximum(v_row / Lpr2, sig), kap), 1.0)
    hi_eps = np.minimum(real.reshape(R, 2).max(axis=1), 1.0)
    kind = np.where(hi_eps >= 1.0, 2, 0)
    out_s = s_row.reshape(R, 2)
    out_c = c_row.reshape(R, 2)
    out_v = np.where(live, v_row, 0.0).reshape(R, 2)
    if mob is not None:
        jm = np.argmin(mob, axis=1)
        mv = mob[ar, jm]
        use = mv <= hi_eps
        hi_eps = np.where(use, mv, hi_eps)
        xb = np.where(use, X[ar, jm], xb)
        kind = np.where(use, 1, kind)
    # the relaxation is only a grid relaxation; a certified witness always wins
    lo_eps = np.minimum(np.minimum(lo_eps, 1.0), hi_eps)
    return dict(lo=lo_eps, hi=hi_eps, x=xb, kind=kind, s=out_s, c=out_c, v=out_v)


def epsilon_level(phi: CircleHomeo, x0: float, m: int, chunk: int = 1024, **kw) -> EpsilonLevel:
    ends = level_endpoints(x0, m)
    lo, hi = ends[:-1], ends[1:]
    parts = [epsilon_intervals(phi, lo[i:i + chunk], hi[i:i + chunk], **kw)
             for i in range(0, lo.size, chunk)]
    cat = lambda k: np.concatenate([p[k] for p in parts])
    s, c, v = cat("s"), cat("c"), cat("v")
    return EpsilonLevel(float(x0), m, cat("lo"), cat("hi"), cat("x"), cat("kind"),
                        s[:, 0], c[:, 0], v[:, 0], s[:, 1], c[:, 1], v[:, 1], phi)


@dataclass
class EpsilonBracket:
    lo: float
    hi: float
    witness: Optional[EpsilonWitness]


def epsilon_number(phi: CircleHomeo, I, constructive: bool = False, eta: float = DEFAULT_ETA,
                   **kw) -> EpsilonBracket:
    """Bracket [lo, hi] for eps_phi(I).

    hi is the realised defect of a certified witness (1 when none is found);
    lo is the optimum of the relaxation that keeps the pinching constraints
    only over 3I, minimised over the same basepoints (a grid estimate).
    With ``constructive`` the witness built from the quadratic and
    fractional-linear majorants is also tried (dyadic I only).
    """
    J, _ = _intervals(I)
    res = epsilon_intervals(phi, [J.lo], [J.hi], **kw)
    lv = EpsilonLevel(0.0, 0, res["lo"], res["hi"], res["x"], res["kind"],
                      res["s"][:, 0], res["c"][:, 0], res["v"][:, 0],
                      res["s"][:, 1], res["c"][:, 1], res["v"][:, 1], phi)
    lo, hi, w = float(lv.lo[0]), float(lv.hi[0]), lv.witness(0)
    if constructive and isinstance(I, DyadicInterval):
        try:
            md = quadratic_majorant(phi, I, eta=eta)
            fm = fractional_majorant(phi, I, md)
            e = realized_epsilon(phi, I, fm.witness)
            if e < hi:
                hi, w = e, fm.witness
                w.eps = e
        except (ScaleTooCoarse, PinchFailure):
            pass
    return EpsilonBracket(min(lo, hi), hi, w)


def epsilon_upper(phi: CircleHomeo, I, **kw) -> float:
    return epsilon_number(phi, I, **kw).hi


EPS_FLOOR = 1e-10


def eps_sq_sum(hi) -> float:
    """sum of hi^2 over a level; defects below EPS_FLOOR are rounding and count as 0."""
    hi = np.asarray(hi, dtype=float)
    return float(np.sum(np.where(hi <= EPS_FLOOR, 0.0, hi) ** 2))


def epsilon_sum(phi: CircleHomeo, x0: float = 0.0, max_depth: int = 10, theta: float = 0.7,
                depth_guard: int = 24, keep_levels: bool = False, **kw) -> SumReport:
    """Per-depth sums of hi(I)^2 and the tail-ratio verdict (as for beta sums)."""
    if max_depth > depth_guard:
        raise ValueError(f"max_depth {max_depth} exceeds the guard {depth_guard}")
    per, levels = [], []
    for m in range(max_depth + 1):
        lv = epsilon_level(phi, x0, m, **kw)
        per.append(eps_sq_sum(lv.hi))
        if keep_levels:
            levels.append(lv)
    verdict, ratios = tail_verdict(per, theta)
    return SumReport(float(x0), 3.0, list(range(max_depth + 1)), per,
                     list(np.cumsum(per)), verdict, ratios, levels)


# ---------------------------------------------------------------------------
# beta <~ eps + l(I)^2 + l(phi(I))^2
# ---------------------------------------------------------------------------

@dataclass
class InequalityFit:
    K: float
    argmax: Optional[tuple]
    n_used: int
    n_skipped: int


def inequality_quotients(st, hi):
    """beta(I) / (hi_eps(I) + l(I)^2 + l(phi(I))^2) for one level (lam = 1 stats).

    Returns (quotients, mask of 0/0 intervals); beta below its rounding
    level counts as 0 and 0/0 intervals get quotient 0.
    """
    den = hi + st.length ** 2 + st.im_len ** 2
    num = np.where(st.beta <= st.noise / st.im_len, 0.0, st.beta)
    zero = (num == 0) & (den == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(zero, 0.0, num / den)
    return q, zero


def beta_epsilon_inequality(phi: CircleHomeo, x0: float = 0.0, depths=range(4, 11),
                            levels=None) -> InequalityFit:
    """Smallest K with beta(I) <= K (hi_eps(I) + l(I)^2 + l(phi(I))^2) over the depths.

    Intervals where both sides vanish are skipped.
    """
    K, arg, used, skipped = 0.0, None, 0, 0
    for m in depths:
        st = level_stats(phi, x0, m, lam=1.0)
        lv = levels[m] if levels is not None else epsilon_level(phi, x0, m)
        q, zero = inequality_quotients(st, lv.hi)
        skipped += int(zero.sum())
        used += int((~zero).sum())
        j = int(np.argmax(q))
        if q[j] > K:
            K, arg = float(q[j]), (m, j)
    return InequalityFit(K, arg, used, skipped)


# ---------------------------------------------------------------------------
# discrete integrals along chains of successive intervals
# ---------------------------------------------------------------------------

@dataclass
class GronwallReport:
    eta: float
    n_chains: int
    n_gamma: int
    gamma_violations: list
    n_values: int
    value_violations: list
    worst_gamma_ratio: float
    worst_value_ratio: float


def gronwall_checks(phi: CircleHomeo, x0: float = 0.0, depth: int = 10, eta: float = DEFAULT_ETA,
                    n_x: int = 3, n_y: int = 7, stats=None) -> GronwallReport:
    """Check the two discrete integral bounds along every chain I_0 c I_1 c ... .

    A chain starts at any interval I_0 (depth 1..depth) and climbs through
    its ancestors while beta(3 I_k) <= (2^eta - 1)/32.  For every k:

        |g_k - g_0| <= 32 g_0 2^{eta (k-1)} S_k,
        |phi(y) - phi(x) - g_0 (y - x)| <= 76 g_0 l(I_k) 2^{eta (k-1)} S_k

    with g_i = gamma(3 I_i), S_k = sum_{i<=k} beta(3 I_i), x sampled in I_0
    and y in the translate I_k^x.  Each comparison allows the rounding level
    of the quantities involved.
    """
    tau = (2.0 ** eta - 1.0) / 32.0
    if stats is None:
        stats = [level_stats(phi, x0, m, lam=3.0) for m in range(depth + 1)]
    gviol, vviol = [], []
    n_chains = n_g = n_v = 0
    wg = wv = 0.0
    fx = (np.arange(n_x) + 0.5) / n_x
    fy = np.linspace(-0.5, 0.5, n_y)
    for d0 in range(1, depth + 1):
        s0 = stats[d0]
        R = 2 ** d0
        idx = np.arange(R)
        g0 = s0.gamma_lam
        alive = s0.beta_lam <= tau
        S = np.where(alive, s0.beta_lam, 0.0)
        n_chains += int(alive.sum())
        xs = s0.lo[:, None] + s0.length * fx[None, :]            # (R, n_x)
        pxs = phi.lift_fn(xs)
        for k in range(0, d0 + 1):
            sk = stats[d0 - k]
            j = idx >> k
            if k > 0:
                alive = alive & (sk.beta_lam[j] <= tau)
                S = S + np.where(alive, sk.beta_lam[j], 0.0)
            if not alive.any():
                break
            fac = 2.0 ** (eta * (k - 1))
            gk = sk.gamma_lam[j]
            slack_g = 4.0 * (s0.noise / s0.lam_im_len + sk.noise[j] / sk.lam_im_len[j]) * g0 + 1e-15 * g0
            lhs = np.abs(gk - g0)
            rhs = 32.0 * g0 * fac * S
            a = np.nonzero(alive)[0]
            n_g += a.size
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(rhs[a] > 0, lhs[a] / rhs[a], np.where(lhs[a] > slack_g[a], np.inf, 0.0))
            wg = max(wg, float(ratio.max()))
            for i in a[lhs[a] > rhs[a] + slack_g[a]]:
                gviol.append((d0, int(i), k, float(lhs[i]), float(rhs[i])))
            lk = sk.length
            ys = xs[a][:, :, None] + lk * fy[None, None, :]
            lhs_v = np.abs(phi.lift_fn(ys) - pxs[a][:, :, None] - g0[a][:, None, None] * (ys - xs[a][:, :, None]))
            rhs_v = (76.0 * g0[a] * lk * fac * S[a])[:, None, None]
            slack_v = 1e-15 * (np.abs(pxs[a]) + 4.0)[:, :, None] * 4.0
            n_v += lhs_v.size
            with np.errstate(divide="ignore", invalid="ignore"):
                rv = np.where(rhs_v > 0, lhs_v / rhs_v, np.where(lhs_v > slack_v, np.inf, 0.0))
            wv = max(wv, float(rv.max()))
            bad = lhs_v > rhs_v + slack_v
            if bad.any():
                for (ii, _, _) in zip(*np.nonzero(bad)):
                    vviol.append((d0, int(a[ii]), k))
    return GronwallReport(eta, n_chains, n_g, gviol, n_v, vviol, wg, wv)


# ---------------------------------------------------------------------------
# constructive majorants
# ---------------------------------------------------------------------------

def majorant_constant(eta: float = DEFAULT_ETA) -> float:
    """C = 256 C1 / (1 - 2^{eta - 1}), C1 = 76 2^{-eta}.

    The geometric series sum_k 2^{(eta - 1) k} converges to 1/(1 - 2^{eta-1}),
    which is what the construction needs.
    """
    if not 0 < eta < 1:
        raise ValueError("the series constant requires 0 < eta < 1")
    c1 = 76.0 * 2.0 ** (-eta)
    return 256.0 * c1 / (1.0 - 2.0 ** (eta - 1.0))


def select_delta(phi: CircleHomeo, x0: float = 0.0, eta: float = DEFAULT_ETA,
                 max_depth: int = 12, stats=None):
    """(delta, d_star): beta(3J) < (2^eta - 1)/32 for every J of depth >= d_star.

    Depths are scanned up to ``max_depth``; delta is chosen so that the
    dyadic intervals of length below 24 delta are exactly those of depth
    >= d_star.  Raises ScaleTooCoarse if even the deepest level fails.
    """
    tau = (2.0 ** eta - 1.0) / 32.0
    if stats is None:
        stats = [level_stats(phi, x0, m, lam=3.0) for m in range(max_depth + 1)]
    bad = [m for m, st in enumerate(stats) if np.any(st.beta_lam >= tau)]
    d_star = (max(bad) + 1) if bad else 0
    if d_star > max_depth:
        raise ScaleTooCoarse(f"beta(3J) threshold {tau:.4g} not reached by depth {max_depth}")
    delta = 1.5 * PI * 2.0 ** (-d_star) / 24.0
    return delta, d_star


@dataclass
class MajorantData:
    P: float
    Q: float
    R: float
    eta: float
    delta: float
    C: float
    x: float
    gamma: float
    beta: float
    lphi: float
    ell: float
    chain_sum: float
    margin: float = math.nan
    phi_x: float = math.nan

    def p(self, y):
        """phi(x) + gamma (y - x) + 2 beta lphi + gamma (y - x)^2 / (16 Q)."""
        d = np.asarray(y, dtype=float) - self.x
        return self.phi_x + self.gamma * d + 2.0 * self.beta * self.lphi + self.gamma * d * d / (16.0 * self.Q)


def quadratic_majorant(phi: CircleHomeo, I: DyadicInterval, x: Optional[float] = None,
                       eta: float = DEFAULT_ETA, delta: Optional[float] = None,
                       strict: bool = False, max_depth: int = 12) -> MajorantData:
    """Local quadratic majorant p >= phi on [x - 5Q, x + 3Q].

    The sum defining 1/Q runs over I and its dyadic ancestors J with
    l(J) < 24 delta.  ScaleTooCoarse is raised when I itself is not below
    24 delta or when one of those beta(3J) misses the threshold; the
    stronger hypothesis l(I) < delta^4 is enforced only with ``strict``.
    """
    tau = (2.0 ** eta - 1.0) / 32.0
    if delta is None:
        delta, _ = select_delta(phi, I.x0, eta, max(max_depth, I.m))
    if strict and not I.length < delta ** 4:
        raise ScaleTooCoarse(f"l(I) = {I.length:.3g} is not below delta^4 = {delta ** 4:.3g}")
    if not I.length < 24.0 * delta:
        raise ScaleTooCoarse(f"l(I) = {I.length:.3g} is not below 24 delta = {24 * delta:.3g}")
    if x is None:
        x = I.center
    C = majorant_constant(eta)
    ell = I.length
    total = 0.0
    for J in [I] + I.chain():
        if not J.length < 24.0 * delta:
            break
        T = J.triple()
        bl = best_linear_linf(phi, T)
        bJ = bl.E0 / (phi.lift(T.hi) - phi.lift(T.lo))
        if bJ >= tau:
            raise ScaleTooCoarse(f"beta(3J) = {bJ:.3g} at depth {J.m} misses the threshold")
        total += bJ * (ell / J.length) ** (1.0 - eta)
    invQ = ell ** -0.25 + C / ell * total
    Q = 1.0 / invQ
    T = I.triple()
    bl = best_linear_linf(phi, T)
    lphi = float(phi.lift(T.hi) - phi.lift(T.lo))
    g = float(bl.gamma)
    b = float(bl.E0 / lphi)
    P = g * Q * Q
    R = P / Q - 2.0 * b * lphi
    md = MajorantData(P, Q, R, eta, delta, C, float(x), g, b, lphi, ell, total,
                      phi_x=float(phi.lift(x)))
    # |(p - phi)''| <= gamma / (8 Q) + sup |phi''| (when phi is C^2)
    curv = None if phi.curv is None else g / (8.0 * Q) + phi.curv
    md.margin, _ = certify_order(md.p, phi.lift_fn, x - 5 * Q, x + 3 * Q, 4001,
                                 extra=_period_breaks(phi, x - 5 * Q, x + 3 * Q), curv=curv,
                                 noise=float(_noise(md.phi_x)))
    return md


def f_tilde(t, P, Q):
    """Fractional-linear majorant in the rotated chart: P/(Q - t) - P/Q."""
    return P / (Q - t) - P / Q


def g_tilde(t, P, Q):
    """Quadratic comparison function P t / Q^2 + P t^2 / (8 Q^3)."""
    return P * t / Q ** 2 + P * t * t / (8.0 * Q ** 3)


def fg_gap(t, P, Q):
    """Closed form of f_tilde - g_tilde: P t^2 (t + 7Q) / (8 Q^3 (Q - t))."""
    return P * t * t * (t + 7.0 * Q) / (8.0 * Q ** 3 * (Q - t))


@dataclass
class FractionalMajorant:
    witness: EpsilonWitness
    margin_plus: float
    margin_minus: float
    data: MajorantData


def fractional_majorant(phi: CircleHomeo, I: DyadicInterval, md: MajorantData,
                        check: bool = True) -> FractionalMajorant:
    """Mobius maps with 2-jets (phi(x) +- (P/Q - R), P/Q^2, +-2P/Q^3) at x.

    In the chart rotated so that (x, p(x)) is the origin the upper map is
    t -> P/(Q - t) - P/Q; the lower map is its mirror image.  Pinching is
    certified over a full period of the lift.
    """
    x, P, Q = md.x, md.P, md.Q
    H = MobiusMap.from_hyperbola(P, Q, P / Q)
    off = P / Q - md.R
    fp, bp = place(H, x, md.phi_x + off)
    fm, bm = place(H.conjugate_by_flip(), x, md.phi_x - off)
    w = EpsilonWitness(x, fm, fp, bm, bp)
    mp = mm = math.nan
    if check:
        (mp, xp), (mm, xm) = pinch_margins(phi, w, width=8.0 * Q, n_loc=2049)
        if mp < 0:
            raise PinchFailure(f"upper majorant crosses phi (margin {mp:.3g})", xp)
        if mm < 0:
            raise PinchFailure(f"lower majorant crosses phi (margin {mm:.3g})", xm)
    w.eps = realized_epsilon(phi, I, w)
    return FractionalMajorant(w, mp, mm, md)


__all__ = [
    "LiftMismatch", "ScaleTooCoarse", "PinchFailure",
    "EpsilonWitness", "Feasibility", "MajorantData", "FractionalMajorant",
    "EpsilonLevel", "EpsilonBracket", "InequalityFit", "GronwallReport",
    "chart_map", "g_lift", "place", "defects", "realized_epsilon", "certify_order",
    "pinch_margins", "witness_feasible", "epsilon_intervals", "epsilon_level",
    "epsilon_number", "epsilon_upper", "epsilon_sum",
    "eps_sq_sum",
    "EPS_FLOOR", "beta_epsilon_inequality",
    "inequality_quotients",
    "gronwall_checks", "majorant_constant", "select_delta", "quadratic_majorant",
    "f_tilde", "g_tilde", "fg_gap", "fractional_majorant",
]
