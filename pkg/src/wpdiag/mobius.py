"""PSL(2,R) algebra.

A :class:`MobiusMap` stores a determinant-one representative ``(a, b, c, d)``
of an element of PSL(2,R).  It acts on the affine chart of RP^1 by

    t  ->  (a t + b) / (c t + d)

and, through the quotient model RP^1 = R / pi Z (with t = tan x), on lifts
x -> f^(x) satisfying f^(x + pi) = f^(x) + pi.

The module also carries the 2x2 "matrix model" helpers: the bilinear form
<M, N>_mat = 1/2 Tr(M J N^T J), the embedding of R^{2,2} into 2x2 matrices,
and the isometry actions of SL(2,R) x SL(2,R).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DET_TOL = 1e-12
PARABOLIC_BAND = 1e-10

J = np.array([[0.0, -1.0], [1.0, 0.0]])


class DegenerateInterval(ValueError):
    pass


class PoleAtBasepoint(ValueError):
    pass


def _canonical(a, b, c, d):
    det = a * d - b * c
    if not det > 0:
        raise ValueError(f"matrix must have positive determinant, got {det!r}")
    s = 1.0 / math.sqrt(det)
    a, b, c, d = a * s, b * s, c * s, d * s
    for v in (a, b, c, d):
        if v != 0.0:
            if v < 0:
                a, b, c, d = -a, -b, -c, -d
            break
    return float(a), float(b), float(c), float(d)


@dataclass(frozen=True)
class MobiusMap:
    """An element of PSL(2,R), canonical representative with det = 1."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        a, b, c, d = _canonical(self.a, self.b, self.c, self.d)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    # -- constructors -------------------------------------------------------

    @classmethod
    def identity(cls):
        return cls(1.0, 0.0, 0.0, 1.0)

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=float)
        return cls(m[0, 0], m[0, 1], m[1, 0], m[1, 1])

    @classmethod
    def rotation(cls, c):
        """Rotation of the quotient model, x -> x + c."""
        cs, sn = math.cos(c), math.sin(c)
        return cls(cs, sn, -sn, cs)

    @classmethod
    def translation(cls, s):
        """Affine translation t -> t + s (parabolic fixing infinity)."""
        return cls(1.0, s, 0.0, 1.0)

    @classmethod
    def dilation(cls, k):
        """Affine dilation t -> k t, k > 0 (hyperbolic)."""
        r = math.sqrt(k)
        return cls(r, 0.0, 0.0, 1.0 / r)

    @classmethod
    def from_hyperbola(cls, P, Q, R):
        """The map t -> P/(Q - t) - R, P > 0."""
        if not P > 0:
            raise ValueError("P must be positive for an orientation-preserving map")
        return cls(R, P - R * Q, -1.0, Q)

    @classmethod
    def from_jet(cls, h0, h1, h2):
        """Unique Mobius map with affine 2-jet (h(0), h'(0), h''(0)) = (h0, h1, h2).

        h1 must be positive.  With d = 1/sqrt(h1): b = h0 d, c = -h2 d^3 / 2
        and a is fixed by ad - bc = 1.
        """
        if not h1 > 0:
            raise ValueError("h'(0) must be positive")
        d = 1.0 / math.sqrt(h1)
        b = h0 * d
        c = -0.5 * h2 * d ** 3
        a = (1.0 + b * c) / d
        return cls(a, b, c, d)

    # -- views --------------------------------------------------------------

    @property
    def matrix(self):
        return np.array([[self.a, self.b], [self.c, self.d]])

    @property
    def det(self):
        return self.a * self.d - self.b * self.c

    @property
    def trace(self):
        return self.a + self.d

    def _w(self):
        """Linear map on (cos x, sin x) implementing the action in the quotient model."""
        w = np.array([[self.d, self.c], [self.b, self.a]])
        if w[0, 0] + w[1, 1] < 0:
            w = -w
        return w

    # -- actions ------------------------------------------------------------

    def affine(self, t):
        """Evaluate on the affine chart; the pole maps to +inf (the point at infinity)."""
        if math.isinf(t):
            return math.inf if self.c == 0 else self.a / self.c
        den = self.c * t + self.d
        if den == 0:
            return math.inf
        return (self.a * t + self.b) / den

    def lift(self, x, branch: int = 0):
        """Continuous lift on R / pi Z, vectorized over x.

        For a representative whose trace is made non-negative, the image
        vector W e(x) never points opposite to e(x), so the oriented angle
        from e(x) to W e(x) lies in (-pi, pi) and varies continuously.
        ``branch`` shifts the lift by branch * pi.
        """
        x = np.asarray(x, dtype=float)
        w = self._w()
        cx, sx = np.cos(x), np.sin(x)
        u = w[0, 0] * cx + w[0, 1] * sx
        v = w[1, 0] * cx + w[1, 1] * sx
        ang = np.arctan2(cx * v - sx * u, cx * u + sx * v)
        out = x + ang + branch * math.pi
        return out if out.ndim else float(out)

    def lift_derivatives(self, x):
        """(f^'(x), f^''(x)) of the lift; f^' = 1/|W e|^2 since det W = 1."""
        x = np.asarray(x, dtype=float)
        w = self._w()
        cx, sx = np.cos(x), np.sin(x)
        u = w[0, 0] * cx + w[0, 1] * sx
        v = w[1, 0] * cx + w[1, 1] * sx
        du = -w[0, 0] * sx + w[0, 1] * cx
        dv = -w[1, 0] * sx + w[1, 1] * cx
        n2 = u * u + v * v
        d1 = 1.0 / n2
        d2 = -2.0 * (u * du + v * dv) / (n2 * n2)
        return d1, d2

    def lift_bounds(self):
        """(sup f^', sup |f^''|) over R.

        With sigma the largest singular value of W: f^' = 1/|We|^2 <= sigma^2,
        and |<We, We'>| <= (sigma^2 - sigma^-2)/2 since e' is orthogonal to e,
        so |f^''| <= (sigma^2 - sigma^-2) sigma^4.
        """
        smax = float(np.linalg.svd(self._w(), compute_uv=False)[0])
        s2 = smax * smax
        return s2, (s2 - 1.0 / s2) * s2 * s2

    def __call__(self, x):
        return self.lift(x)

    def compose(self, other: "MobiusMap") -> "MobiusMap":
        """self o other."""
        return MobiusMap.from_matrix(self.matrix @ other.matrix)

    def __matmul__(self, other):
        return self.compose(other)

    def inverse(self) -> "MobiusMap":
        return MobiusMap(self.d, -self.b, -self.c, self.a)

    def conjugate_by_flip(self) -> "MobiusMap":
        """Conjugate by t -> -t, i.e. the map t -> -f(-t)."""
        return MobiusMap(self.a, -self.b, -self.c, self.d)

    def close_to(self, other: "MobiusMap", tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.matrix - other.matrix)) <= tol)


def mobius_apply(m: MobiusMap, x, branch: int = 0):
    return m.lift(x, branch)


def mobius_compose(m1: MobiusMap, m2: MobiusMap) -> MobiusMap:
    return m1.compose(m2)


def mobius_invert(m: MobiusMap) -> MobiusMap:
    return m.inverse()


def mobius_classify(m: MobiusMap) -> str:
    if np.max(np.abs(m.matrix - np.eye(2))) <= DET_TOL:
        return "identity"
    t = abs(m.trace)
    if abs(t - 2.0) <= PARABOLIC_BAND:
        return "parabolic"
    return "elliptic" if t < 2.0 else "hyperbolic"


def jet_at_zero(m: MobiusMap, pole_tol: float = 1e-12):
    """Affine 2-jet (h(0), h'(0), h''(0)) of t -> (at+b)/(ct+d)."""
    if abs(m.d) < pole_tol:
        raise PoleAtBasepoint("affine chart is singular at 0")
    d = m.d
    return m.b / d, 1.0 / d ** 2, -2.0 * m.c / d ** 3


def dist_to_identity_estimate(m: MobiusMap) -> float:
    h0, h1, h2 = jet_at_zero(m)
    return abs(h0) + abs(h1 - 1.0) + abs(h2)


def compose_jets(j1, j2):
    """Chain rule for 2-jets: the jet of g o f at 0.

    j2 = (f(0), f'(0), f''(0)) and j1 = (g, g', g'') evaluated at f(0).
    """
    g0, g1, g2 = j1
    _, f1, f2 = j2
    return g0, g1 * f1, g2 * f1 ** 2 + g1 * f2


def phe_factors(lo: float, hi: float):
    """(P, H) with H: t -> 2t/lambda and P: t -> t - 2m/lambda, so (P o H)[lo, hi] = [-1, 1]."""
    lam = hi - lo
    if not lam >= 1e-14:
        raise DegenerateInterval(f"interval [{lo!r}, {hi!r}] is degenerate")
    mid = 0.5 * (lo + hi)
    r = math.sqrt(2.0 / lam)
    H = MobiusMap(r, 0.0, 0.0, 1.0 / r)
    P = MobiusMap(1.0, -2.0 * mid / lam, 0.0, 1.0)
    return P, H


# ---------------------------------------------------------------------------
# matrix model of R^{2,2}
# ---------------------------------------------------------------------------

def mat_inner(M, N) -> float:
    """<M, N>_mat = 1/2 Tr(M J N^T J); det M = -<M, M>_mat."""
    M = np.asarray(M, dtype=float)
    N = np.asarray(N, dtype=float)
    return 0.5 * float(np.trace(M @ J @ N.T @ J))


def inner22(x, y) -> float:
    """Signature (2,2) form x1y1 + x2y2 - x3y3 - x4y4."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(x[0] * y[0] + x[1] * y[1] - x[2] * y[2] - x[3] * y[3])


def quad_embed(x):
    x1, x2, x3, x4 = (float(v) for v in x)
    return np.array([[x3 - x1, x2 - x4], [x2 + x4, x3 + x1]])


def quad_unembed(M):
    M = np.asarray(M, dtype=float)
    x3 = 0.5 * (M[0, 0] + M[1, 1])
    x1 = 0.5 * (M[1, 1] - M[0, 0])
    x2 = 0.5 * (M[0, 1] + M[1, 0])
    x4 = 0.5 * (M[1, 0] - M[0, 1])
    return np.array([x1, x2, x3, x4])


def isom_action(M, N, A):
    """alpha(M, N) . A = M A N^{-1}."""
    M = np.asarray(M, dtype=float)
    N = np.asarray(N, dtype=float)
    A = np.asarray(A, dtype=float)
    return M @ A @ np.linalg.inv(N)


def line_action(M, x):
    """Projective action of a 2x2 matrix on the line [cos x : sin x]; result in [0, pi)."""
    M = np.asarray(M, dtype=float)
    x = np.asarray(x, dtype=float)
    u = M[0, 0] * np.cos(x) + M[0, 1] * np.sin(x)
    v = M[1, 0] * np.cos(x) + M[1, 1] * np.sin(x)
    out = np.mod(np.arctan2(v, u), math.pi)
    return out if out.ndim else float(out)


def ein_action(M, N, L):
    """beta(M, N) . (L1, L2) = (M . L1, N^T . L2) on RP^1 x RP^1."""
    L1, L2 = L
    return line_action(M, L1), line_action(np.asarray(N, dtype=float).T, L2)
