"""Diamonds, the canonical normalization and the limiting domain.

Kleinian coordinates
--------------------
Boundary computations use the projective chart

    y = (-x1, x2, -x4) / x3

of the quadric model, which differs from :func:`wpdiag.charts.kleinian` by a
signed permutation of coordinates (an isometry of R^{2,2}).  In it the point
(a1, a2) of Ein^{1,1} (matrix-angle coordinates) lands on

    y = (cos(a1 + a2), sin(a1 + a2), sin(a2 - a1)) / cos(a1 - a2),

so the diagonal {(a, a)} becomes the unit circle of the plane y3 = 0 and the
corners (-pi/4, pi/4), (pi/4, -pi/4) of the normalised square become the
ideal points of the lightlike rays (t, 0, t) and (t, 0, -t).

Diamonds
--------
For boundary points p1, p2 with |a1 - a2| < pi/2, the AdS diamond is the set
of y in Omega = {<y, y> < 1} with <y, p~1> >= 1 and <y, p~2> >= 1, i.e. the
region cut off by the two tangent planes of the boundary quadric.  When a
corner sits on |a1 - a2| = pi/2 the tangent plane degenerates to the plane
orthogonal to the corresponding lightlike ray R and the test becomes
<y, R> >= 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .charts import klein_form
from .homeo import PI, CircleHomeo, DyadicInterval, Interval, dyadic_level
from .mobius import MobiusMap, dist_to_identity_estimate, phe_factors

QUARTER_PI = 0.25 * PI
IDEAL_TOL = 1e-12
NORMALIZATION_TOL = 1e-10
LIMIT_INDICES = tuple(range(-3, 3))


class NotTimeRelated(ValueError):
    pass


class OutsideKleinDomain(ValueError):
    pass


class ScaleTooCoarse(ValueError):
    pass


def _wrap(v):
    """Representative of v (mod pi) in [-pi/2, pi/2)."""
    out = np.mod(np.asarray(v, dtype=float) + 0.5 * PI, PI) - 0.5 * PI
    return out if out.ndim else float(out)


def _lform(y, z):
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    return y[..., 0] * z[..., 0] + y[..., 1] * z[..., 1] - y[..., 2] * z[..., 2]


# ---------------------------------------------------------------------------
# Ein^{1,1} diamonds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EinDiamond:
    """Product rectangle [h_lo, h_hi] x [v_lo, v_hi] in matrix-angle coordinates."""

    h_lo: float
    h_hi: float
    v_lo: float
    v_hi: float

    @property
    def horizontal(self) -> Interval:
        return Interval(self.h_lo, self.h_hi)

    @property
    def vertical(self) -> Interval:
        return Interval(self.v_lo, self.v_hi)

    @property
    def corners(self):
        """(p1, p2) = ((h_lo, v_hi), (h_hi, v_lo))."""
        return (self.h_lo, self.v_hi), (self.h_hi, self.v_lo)

    def contains(self, a1, a2, slack: float = 0.0) -> bool:
        return (self.h_lo - slack <= a1 <= self.h_hi + slack
                and self.v_lo - slack <= a2 <= self.v_hi + slack)


def diamond_ein(p1, p2) -> EinDiamond:
    """Diamond of time-related points p1 = (x11, x12), p2 = (x21, x22).

    Requires x11 <= x21 and x12 >= x22 (equality gives a degenerate segment).
    """
    (x11, x12), (x21, x22) = p1, p2
    if not (x11 <= x21 and x12 >= x22):
        raise NotTimeRelated(f"{p1!r} and {p2!r} are not time-related in this chart")
    return EinDiamond(float(x11), float(x21), float(x22), float(x12))


def boundary_diamond(phi: CircleHomeo, I: DyadicInterval) -> EinDiamond:
    """The ideal boundary 3I x phi(3I) of D_I."""
    J = I.triple()
    return EinDiamond(J.lo, J.hi, float(phi.lift(J.lo)), float(phi.lift(J.hi)))


# ---------------------------------------------------------------------------
# Kleinian side
# ---------------------------------------------------------------------------

def ein_to_klein(a1, a2):
    """Kleinian image of the Ein point (a1, a2); requires cos(a1 - a2) != 0."""
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    c = np.cos(a1 - a2)
    if np.any(np.abs(c) < IDEAL_TOL):
        raise OutsideKleinDomain("point is ideal in the Kleinian chart")
    s = a1 + a2
    return np.stack([np.cos(s), np.sin(s), np.sin(a2 - a1)], axis=-1) / c[..., None]


def ideal_ray(a1, a2):
    """Direction of the lightlike ray of an Ein point with cos(a1 - a2) = 0,
    oriented as the limit of points approaching from cos(a1 - a2) > 0."""
    s = a1 + a2
    return np.array([math.cos(s), math.sin(s), math.sin(a2 - a1)])


def _half_space(p):
    """(normal, offset) with the diamond side given by <y, normal> >= offset."""
    a1, a2 = p
    c = math.cos(a1 - a2)
    if abs(c) < IDEAL_TOL:
        return ideal_ray(a1, a2), 0.0
    if c < 0:
        raise NotTimeRelated("corner lies outside the Penrose chart of the diamond")
    return ein_to_klein(a1, a2), 1.0


def ideal_diamond_contains(R1, R2, q, tol: float = 0.0) -> bool:
    """Diamond of two ideal points given by lightlike rays R1 and R2."""
    q = np.asarray(q, dtype=float)
    if not klein_form(q) < 1:
        raise OutsideKleinDomain("query point is outside the Kleinian domain")
    return bool(_lform(q, R1) >= -tol and _lform(q, R2) >= -tol)


def diamond_ads_contains(p1, p2, q, tol: float = 0.0) -> bool:
    """Is the Kleinian point q in the AdS diamond of the Ein points p1, p2?"""
    q = np.asarray(q, dtype=float)
    if not klein_form(q) < 1:
        raise OutsideKleinDomain("query point is outside the Kleinian domain")
    for p in (p1, p2):
        n, off = _half_space(p)
        if _lform(q, n) < off - tol:
            return False
    return True


# ---------------------------------------------------------------------------
# canonical normalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CanonicalTransform:
    T1: MobiusMap
    T2: MobiusMap
    factors1: tuple  # (P1, H1, E1)
    factors2: tuple  # (P2, H2, E2)
    x: float

    def apply1(self, x):
        return _wrap(self.T1.lift(x))

    def apply2(self, y):
        return _wrap(self.T2.lift(y))


def _normalizer(lo: float, hi: float, centre: float):
    if not (hi - lo < PI and lo - centre > -0.5 * PI and hi - centre < 0.5 * PI):
        raise ScaleTooCoarse("interval does not fit in one affine chart about its basepoint")
    E = MobiusMap.rotation(-centre)
    P, H = phe_factors(math.tan(lo - centre), math.tan(hi - centre))
    return P.compose(H).compose(E), (P, H, E)


def canonical_transform(phi: CircleHomeo, I: DyadicInterval, x: Optional[float] = None,
                        check: bool = True) -> CanonicalTransform:
    """T_I = (P1 H1 E1, P2 H2 E2) sending 3I and phi(3I) onto [-pi/4, pi/4].

    E1, E2 are the rotations taking x and phi(x) to 0 (x defaults to the
    centre of I); H and P are the hyperbolic and parabolic factors in the
    affine chart about 0.
    """
    x = I.center if x is None else float(x)
    J = I.triple()
    T1, f1 = _normalizer(J.lo, J.hi, x)
    a, b, px = (float(v) for v in phi.lift(np.array([J.lo, J.hi, x])))
    T2, f2 = _normalizer(a, b, px)
    T = CanonicalTransform(T1, T2, f1, f2, x)
    if check:
        err = normalization_error(phi, I, T)
        if err > NORMALIZATION_TOL:
            raise AssertionError(f"normalization contract violated by {err:.3e}")
    return T


def normalization_error(phi: CircleHomeo, I: DyadicInterval, T: CanonicalTransform) -> float:
    """max |endpoint - (-+pi/4)| over the normalised 3I and phi(3I)."""
    J = I.triple()
    e1 = T.apply1(np.array([J.lo, J.hi]))
    e2 = T.apply2(phi.lift(np.array([J.lo, J.hi])))
    target = np.array([-QUARTER_PI, QUARTER_PI])
    return float(max(np.max(np.abs(e1 - target)), np.max(np.abs(e2 - target))))


@dataclass
class NormalizedData:
    T: CanonicalTransform
    y: float
    psi: CircleHomeo
    g_minus: Optional[MobiusMap] = None
    g_plus: Optional[MobiusMap] = None

    def g_distances(self):
        """Jet distance to the identity of g-, g+ (None when no witness)."""
        if self.g_minus is None:
            return None
        return dist_to_identity_estimate(self.g_minus), dist_to_identity_estimate(self.g_plus)


def normalized_data(phi: CircleHomeo, I: DyadicInterval, witness=None) -> NormalizedData:
    """(y_I, psi_I, g_{+-,I}) for the canonical transform at the witness basepoint.

    ``witness`` is an :class:`wpdiag.epsilon.EpsilonWitness` or None.
    """
    x = None if witness is None else witness.x
    T = canonical_transform(phi, I, x)
    T1i = T.T1.inverse()
    T2 = T.T2

    def raw(a):
        return T2.lift(phi.lift_fn(T1i.lift(a)))

    shift = PI * round((-QUARTER_PI - float(raw(-QUARTER_PI))) / PI)

    def psi_lift(a):
        return raw(a) + shift

    psi = CircleHomeo(lift_fn=psi_lift, lip=phi.lip * T2.lift_bounds()[0] * T1i.lift_bounds()[0],
                      tag=f"normalized:{phi.tag}")
    gm = gp = None
    if witness is not None:
        gm = T2.compose(witness.f_minus).compose(T1i)
        gp = T2.compose(witness.f_plus).compose(T1i)
    return NormalizedData(T, T.apply1(T.x), psi, gm, gp)


# ---------------------------------------------------------------------------
# corner limits
# ---------------------------------------------------------------------------

def predicted_corners(k: int):
    """(arctan(k/3), arctan((k+1)/3)), i.e. arctan((2k+1)/6 -+ 1/6)."""
    return math.atan((2 * k + 1) / 6 - 1 / 6), math.atan((2 * k + 1) / 6 + 1 / 6)


@dataclass
class CornerRecord:
    J: DyadicInterval
    k: int
    actual1: tuple
    actual2: tuple
    predicted: tuple
    dev1: float
    dev2: float


def corner_positions(phi: CircleHomeo, I: DyadicInterval, T: Optional[CanonicalTransform] = None,
                     lam: float = 3.0) -> List[CornerRecord]:
    """Normalised corners of the half-length dyadic intervals J inside lam * I.

    k is chosen to minimise the deviation of (T1 J)_+- from the predicted
    corners; the same k is used for T2 phi(J).
    """
    T = canonical_transform(phi, I) if T is None else T
    box = I.scale(lam)
    out = []
    for J in dyadic_level(I.x0, I.m + 1):
        if not box.contains_interval(J.interval):
            continue
        a1 = T.apply1(np.array([J.lo, J.hi]))
        a2 = T.apply2(phi.lift(np.array([J.lo, J.hi])))
        k0 = int(math.floor(3.0 * math.tan(a1[0])))
        best = None
        for k in (k0 - 1, k0, k0 + 1):
            pr = np.array(predicted_corners(k))
            d = float(np.max(np.abs(a1 - pr)))
            if best is None or d < best[1]:
                best = (k, d, pr)
        k, d1, pr = best
        d2 = float(np.max(np.abs(a2 - pr)))
        out.append(CornerRecord(J, k, tuple(a1), tuple(a2), tuple(pr), d1, d2))
    return out


# ---------------------------------------------------------------------------
# slab and limiting domain
# ---------------------------------------------------------------------------

def slab_contains(c_eps: float, q) -> bool:
    """Membership in X~ = {y1^2 + y2^2 < 1 + y3^2, |y3| < c_eps}."""
    q = np.asarray(q, dtype=float)
    return bool(q[0] ** 2 + q[1] ** 2 < 1 + q[2] ** 2 and abs(q[2]) < c_eps)


def graph_y3(lift, n: int = 4096):
    """max |y3| over the Kleinian image of the graph of a lift.

    The point (a, g(a)) has y3 = tan(g(a) - a); one period suffices.
    """
    a = np.linspace(-0.5 * PI, 0.5 * PI, n, endpoint=False)
    d = np.asarray(lift(a)) - a
    d = _wrap(d)
    return float(np.max(np.abs(np.tan(d))))


@dataclass
class SlabReport:
    psi: float
    g_minus: Optional[float]
    g_plus: Optional[float]


def homeo_graph_in_slab(phi: CircleHomeo, I: DyadicInterval, witness=None,
                        n: int = 4096) -> SlabReport:
    """Worst |y3| over the normalised graphs of psi_I and g_{+-,I}."""
    nd = normalized_data(phi, I, witness)
    gm = gp = None
    if nd.g_minus is not None:
        gm = graph_y3(nd.g_minus.lift, n)
        gp = graph_y3(nd.g_plus.lift, n)
    return SlabReport(graph_y3(nd.psi.lift, n), gm, gp)


def limit_corner(j: int) -> float:
    return math.atan(j / 3.0)


def limit_diamonds():
    """Corner pairs of the six limiting diamonds D_{inf,i}, i = -3..2."""
    out = []
    for i in LIMIT_INDICES:
        lo, hi = limit_corner(i - 1), limit_corner(i + 2)
        out.append(((lo, hi), (hi, lo)))
    return out


@dataclass
class LimitingDomain:
    theta: np.ndarray
    radius: np.ndarray
    r: float
    caps: list  # (centre angle, cos half-width) of each removed cap on H0

    @property
    def boundary(self):
        return np.column_stack([self.radius * np.cos(self.theta),
                                self.radius * np.sin(self.theta)])

    def contains(self, y1, y2) -> bool:
        if not (y1 >= 0 and y1 * y1 + y2 * y2 < 1):
            return False
        return all(y1 * math.cos(s) + y2 * math.sin(s) < c for s, c in self.caps)


def limiting_domain(n: int = 10_000) -> LimitingDomain:
    """Sampled boundary of Y~_inf = H0 cap D~ minus the six limiting diamonds.

    On H0 = {y3 = 0} the diamond of the corners (a, b), (b, a) is the cap
    {<y, u_s> >= cos(b - a)}, u_s = (cos s, sin s), s = a + b; the ideal
    diamond of the normalised square is the half disc y1 >= 0.  The region
    is star-shaped about 0, so its boundary is sampled by the radius along
    n directions and r is the largest sampled radius.
    """
    caps = []
    for (a, b), _ in limit_diamonds():
        caps.append((a + b, math.cos(b - a)))
    theta = np.linspace(-0.5 * PI, 0.5 * PI, n)
    rad = np.ones(n)
    for s, c in caps:
        cs = np.cos(theta - s)
        lim = np.where(cs > 0, c / np.where(cs > 0, cs, 1.0), np.inf)
        rad = np.minimum(rad, lim)
    return LimitingDomain(theta, rad, float(rad.max()), caps)


def limiting_radius_exact() -> float:
    """Largest |y| over the region, from the vertices of its boundary polygon."""
    caps = [(a + b, math.cos(b - a)) for (a, b), _ in limit_diamonds()]
    lines = [(np.array([math.cos(s), math.sin(s)]), c) for s, c in caps]
    lines.append((np.array([-1.0, 0.0]), 0.0))  # y1 >= 0 written as <y, -e1> <= 0
    best = 0.0
    for i in range(len(lines)):
        for j in range(i + 1, len(lines)):
            A = np.array([lines[i][0], lines[j][0]])
            if abs(np.linalg.det(A)) < 1e-14:
                continue
            y = np.linalg.solve(A, np.array([lines[i][1], lines[j][1]]))
            if np.dot(y, y) >= 1 or y[0] < -1e-12:
                continue
            if all(np.dot(n_, y) <= c + 1e-12 for n_, c in lines):
                best = max(best, float(np.hypot(*y)))
    return best


# ---------------------------------------------------------------------------
# boundary coverage
# ---------------------------------------------------------------------------

def graph_coverage(phi: CircleHomeo, x0: float, m: int, n: int = 1000, seed: int = 0):
    """For random graph points (x, phi(x)), the number of depth-m rectangles
    3I x phi(3I) (taken mod pi) containing them."""
    rng = np.random.default_rng(seed)
    x = x0 + rng.uniform(0.0, PI, n)
    y = phi.lift(x)
    counts = np.zeros(n, dtype=int)
    for I in dyadic_level(x0, m):
        J = I.triple()
        a, b = phi.lift(np.array([J.lo, J.hi]))
        for sh in (-1, 0, 1):
            ins = ((J.lo + sh * PI <= x) & (x <= J.hi + sh * PI)
                   & (a + sh * PI <= y) & (y <= b + sh * PI))
            counts += ins
    return counts


__all__ = [
    "NotTimeRelated",
    "OutsideKleinDomain",
    "ScaleTooCoarse",
    "EinDiamond",
    "diamond_ein",
    "boundary_diamond",
    "ein_to_klein",
    "ideal_ray",
    "ideal_diamond_contains",
    "diamond_ads_contains",
    "CanonicalTransform",
    "canonical_transform",
    "normalization_error",
    "NormalizedData",
    "normalized_data",
    "predicted_corners",
    "CornerRecord",
    "corner_positions",
    "slab_contains",
    "graph_y3",
    "SlabReport",
    "homeo_graph_in_slab",
    "limit_corner",
    "limit_diamonds",
    "LimitingDomain",
    "limiting_domain",
    "limiting_radius_exact",
    "graph_coverage",
]
