"""Coordinate models of RP^1, AdS^{2,1} and Ein^{1,1}.

Conventions
-----------
* RP^1 is R / pi Z; a point x is the line [cos x : sin x], and the affine
  chart is t = tan x with x = pi/2 sent to infinity.
* Ein^{1,1} = RP^1 x RP^1 in matrix-angle coordinates (x1, x2), realised by
  the rank-one matrix N(x1, x2) = (cos x1, sin x1)^T (cos x2, sin x2).
* AdS^{2,1} points are unit timelike vectors of R^{2,2} (<x, x> = -1) up to
  sign; the Kleinian chart is y = (x1, x2, x3) / x4.
"""

from __future__ import annotations

import math

import numpy as np

from .mobius import MobiusMap, inner22, quad_embed, mat_inner

EXCLUDED_TOL = 1e-14


class ChartSingularity(ValueError):
    pass


class OnExcludedPlane(ValueError):
    pass


class ZeroVector(ValueError):
    pass


def reduce_rp1(x):
    """Canonical representative in [0, pi)."""
    out = np.mod(np.asarray(x, dtype=float), math.pi)
    # fmod can land exactly on pi for tiny negative inputs
    out = np.where(out >= math.pi, 0.0, out)
    return out if out.ndim else float(out)


def projectivize(x):
    """P(x) = [cos x : sin x] as a unit vector."""
    return np.array([math.cos(x), math.sin(x)])


# ---------------------------------------------------------------------------
# RP^1 charts
# ---------------------------------------------------------------------------

def quotient_affine(x) -> float:
    """tan x, with the point pi/2 (mod pi) sent to +inf."""
    r = reduce_rp1(x)
    if abs(r - math.pi / 2) < 1e-15:
        return math.inf
    return math.tan(r)


def affine_quotient(t) -> float:
    if math.isinf(t):
        return math.pi / 2
    return reduce_rp1(math.atan(t))


# ---------------------------------------------------------------------------
# Ein^{1,1}
# ---------------------------------------------------------------------------

def matrix_angle(x1, x2):
    """Rank-one representative N(x1, x2) of a point of Ein^{1,1}."""
    u = np.array([math.cos(x1), math.sin(x1)])
    v = np.array([math.cos(x2), math.sin(x2)])
    return np.outer(u, v)


def reduce_ein(x1, x2):
    """Fundamental-domain representative in [0, pi) x [0, pi)."""
    return reduce_rp1(x1), reduce_rp1(x2)


def penrose_rot(x1, x2):
    """Rotated Penrose chart (tan x1, tan x2)."""
    for x in (x1, x2):
        if abs(math.cos(x)) < 1e-15:
            raise ChartSingularity(f"argument {x!r} is at pi/2 mod pi")
    return math.tan(x1), math.tan(x2)


def penrose_mat(x1, x2):
    """Matrix Penrose chart 1/2 (tan x1 + tan x2, -tan x1 + tan x2)."""
    t1, t2 = penrose_rot(x1, x2)
    return 0.5 * (t1 + t2), 0.5 * (-t1 + t2)


def causal_type(v) -> str:
    """Causal character of a tangent vector (dx1, dx2) for the form dx1 dx2."""
    dx1, dx2 = v
    if dx1 == 0 and dx2 == 0:
        raise ZeroVector("tangent vector is zero")
    q = dx1 * dx2
    if q > 0:
        return "spacelike"
    if q < 0:
        return "timelike"
    return "lightlike"


def ein_metric_fd(x1, x2, v, h=1e-5) -> float:
    """Central finite-difference value of N^* <., .>_mat on direction v.

    Returns <dN(v), dN(v)>_mat estimated from N(x + hv) - N(x - hv); the
    exact value is v1 * v2.
    """
    v1, v2 = v
    d = matrix_angle(x1 + h * v1, x2 + h * v2) - matrix_angle(x1 - h * v1, x2 - h * v2)
    return mat_inner(d, d) / (4.0 * h * h)


# ---------------------------------------------------------------------------
# Kleinian chart of AdS^{2,1}
# ---------------------------------------------------------------------------

def klein_form(y) -> float:
    """<y, y> of signature (2, 1)."""
    y = np.asarray(y, dtype=float)
    return float(y[0] ** 2 + y[1] ** 2 - y[2] ** 2)


def kleinian(x):
    x = np.asarray(x, dtype=float)
    if abs(x[3]) < EXCLUDED_TOL:
        raise OnExcludedPlane("x4 vanishes: point lies on the excluded plane")
    return x[:3] / x[3]


def kleinian_inverse(y):
    """Unit timelike representative (<x, x> = -1, x4 > 0) of the Klein point y."""
    y = np.asarray(y, dtype=float)
    q = 1.0 - klein_form(y)
    if not q > 0:
        raise ValueError("point is not in the Klein domain")
    s = 1.0 / math.sqrt(q)
    return np.array([y[0] * s, y[1] * s, y[2] * s, s])


def random_ads_point(rng):
    """Random unit timelike vector of R^{2,2} with x4 bounded away from 0."""
    while True:
        y = rng.uniform(-1.5, 1.5, size=3)
        if klein_form(y) < 0.98:
            return kleinian_inverse(y)


# ---------------------------------------------------------------------------
# acausal circles
# ---------------------------------------------------------------------------

def acausal_circle_of(f: MobiusMap):
    """Describe the graph {(t, f(t))} in the rotated Penrose chart.

    Returns ``("line", A, B)`` for t -> A t + B, or ``("hyperbola", P, Q, R)``
    for t -> P/(Q - t) - R, whose asymptotes meet at (Q, -R).
    """
    a, b, c, d = f.a, f.b, f.c, f.d
    if c == 0.0:
        return ("line", a / d, b / d)
    return ("hyperbola", 1.0 / (c * c), -d / c, -a / c)


def sample_acausal_circle(f: MobiusMap, n: int = 256):
    """Points (x, f^(x)) of the graph in matrix-angle coordinates, one period."""
    x = np.linspace(0.0, math.pi, n, endpoint=False)
    return np.column_stack([x, f.lift(x)])


__all__ = [
    "ChartSingularity",
    "OnExcludedPlane",
    "ZeroVector",
    "reduce_rp1",
    "projectivize",
    "quotient_affine",
    "affine_quotient",
    "matrix_angle",
    "reduce_ein",
    "penrose_rot",
    "penrose_mat",
    "causal_type",
    "ein_metric_fd",
    "klein_form",
    "kleinian",
    "kleinian_inverse",
    "random_ads_point",
    "acausal_circle_of",
    "sample_acausal_circle",
    "inner22",
    "quad_embed",
]
