"""Matrix-model surface algebra: frames, Gauss maps, pull-back metrics and
the lambda <-> mu dictionary.

A frame (M, N) of a spacelike surface in the matrix model has det M = 1
(a point of SL(2,R)) and a unit timelike normal N with <N, N>_mat = -1 and
<M, N>_mat = 0.  Its left and right Gauss maps are

    G_l = M^{-1} N,    G_r = N M^{-1},

both square roots of -Id, i.e. points of the quadric H of trace-free
matrices with X^2 = -Id.  H has two components; H+ is the one containing
J = [[0, -1], [1, 0]] and is recognised by a positive lower-left entry.

For a maximal surface with shape-operator eigenvalues +-lambda the
Beltrami coefficient of the associated minimal Lagrangian map and the
curvature densities are explicit functions of lambda:

    |mu|^2 = 4 l^2 / (1 + l^2)^2,   mu~^2 = |mu|^2 (1 - l^2),
    |A|^2 = 2 l^2 (Frobenius norm),  K_int = l^2 - 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mobius import J, mat_inner

FRAME_TOL = 1e-10


class FrameInvalid(ValueError):
    pass


class OutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class SpacelikeFrame:
    M: np.ndarray
    N: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        N = np.asarray(self.N, dtype=float)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "N", N)
        errs = (abs(np.linalg.det(M) - 1.0), abs(mat_inner(N, N) + 1.0), abs(mat_inner(M, N)))
        if max(errs) > FRAME_TOL * max(1.0, np.abs(M).max() * np.abs(N).max()):
            raise FrameInvalid(f"not a unit timelike frame (defects {errs!r})")

    def flow(self, t: float) -> "SpacelikeFrame":
        """Geodesic-flow translate (cos t M + sin t N, -sin t M + cos t N)."""
        c, s = math.cos(t), math.sin(t)
        return SpacelikeFrame(c * self.M + s * self.N, -s * self.M + c * self.N)

    def act(self, A, B) -> "SpacelikeFrame":
        """Isometry (A, B): X -> A X B^{-1} applied to both vectors."""
        A = np.asarray(A, dtype=float)
        Bi = np.linalg.inv(np.asarray(B, dtype=float))
        return SpacelikeFrame(A @ self.M @ Bi, A @ self.N @ Bi)


def in_upper_sheet(X) -> bool:
    """Is X (with X^2 = -Id) in the component H+ of J?"""
    return bool(np.asarray(X)[1, 0] > 0)


def gauss_maps(f: SpacelikeFrame):
    """(G_l, G_r) = (M^{-1} N, N M^{-1})."""
    Mi = np.linalg.inv(f.M)
    return Mi @ f.N, f.N @ Mi


def on_quadric_error(X) -> float:
    X = np.asarray(X, dtype=float)
    return float(np.max(np.abs(X @ X + np.eye(2))))


def random_sl2(rng, scale: float = 1.0):
    while True:
        m = rng.normal(scale=scale, size=(2, 2)) + np.eye(2)
        d = np.linalg.det(m)
        if d > 0.05:
            return m / math.sqrt(d)


def random_frame(rng) -> SpacelikeFrame:
    """(M, M X) with M in SL(2,R) and X in H+ (X = P J P^{-1})."""
    M = random_sl2(rng)
    P = random_sl2(rng)
    X = P @ J @ np.linalg.inv(P)
    return SpacelikeFrame(M, M @ X)


def geodesic_plane_frame(S) -> SpacelikeFrame:
    """Frame of the totally geodesic plane {M : <M, J> = 0} at a symmetric
    positive S with det S = 1; its normal is the constant J."""
    return SpacelikeFrame(np.asarray(S, dtype=float), J.copy())


def conjugating_map(frames):
    """Best C (unit Frobenius norm) with C G_l = G_r C over all frames.

    Returns (C, residual); a small residual means G_r o G_l^{-1} is the
    single Mobius map X -> C X C^{-1}.
    """
    rows = []
    for f in frames:
        Gl, Gr = gauss_maps(f)
        # C Gl - Gr C = 0 is linear in vec(C)
        rows.append(np.kron(np.eye(2), Gl.T) - np.kron(Gr, np.eye(2)))
    A = np.vstack(rows)
    _, s, vt = np.linalg.svd(A)
    C = vt[-1].reshape(2, 2)
    if np.linalg.det(C) < 0:
        C = -C
    return C, float(s[-1])


# ---------------------------------------------------------------------------
# pull-back metrics
# ---------------------------------------------------------------------------

@dataclass
class PullbackMetrics:
    g_l: np.ndarray
    g_r: np.ndarray
    degenerate_l: bool
    degenerate_r: bool

    @property
    def degenerate(self) -> bool:
        return self.degenerate_l or self.degenerate_r


def pullback_metrics(g, Jc, A, tol: float = 1e-12) -> PullbackMetrics:
    """g_l = g((A + J) ., (A + J) .) and g_r = g((A - J) ., (A - J) .).

    A degenerate form (possible only when lambda = 1) is flagged rather
    than raised.
    """
    g = np.asarray(g, dtype=float)
    Jc = np.asarray(Jc, dtype=float)
    A = np.asarray(A, dtype=float)
    if np.max(np.abs(Jc @ Jc + np.eye(2))) > 1e-10:
        raise ValueError("J must square to -Id")
    if np.max(np.abs(Jc.T @ g @ Jc - g)) > 1e-10 * max(1.0, np.abs(g).max()):
        raise ValueError("J must be g-orthogonal")
    gA = g @ A
    if np.max(np.abs(gA - gA.T)) > 1e-10 * max(1.0, np.abs(gA).max()) or abs(np.trace(A)) > 1e-10:
        raise ValueError("A must be g-self-adjoint and trace-free")
    Bl, Br = A + Jc, A - Jc
    gl = Bl.T @ g @ Bl
    gr = Br.T @ g @ Br
    scale = max(1.0, abs(np.linalg.det(g)))
    return PullbackMetrics(gl, gr, abs(np.linalg.det(gl)) <= tol * scale,
                           abs(np.linalg.det(gr)) <= tol * scale)


def null_direction(B):
    """Unit kernel vector of a rank-one 2x2 matrix."""
    _, _, vt = np.linalg.svd(np.asarray(B, dtype=float))
    return vt[-1]


# ---------------------------------------------------------------------------
# lambda <-> mu dictionary
# ---------------------------------------------------------------------------

def _check_unit(v, name):
    arr = np.asarray(v, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise OutOfRange(f"{name} must lie in [0, 1]")
    return arr


def _out(a):
    return a if np.ndim(a) else float(a)


def mu_from_lambda(lam):
    """|mu|^2 = 4 lambda^2 / (1 + lambda^2)^2."""
    l2 = _check_unit(lam, "lambda") ** 2
    return _out(4.0 * l2 / (1.0 + l2) ** 2)


def mu_tilde_sq(lam):
    """mu~^2 = 4 lambda^2 (1 - lambda^2) / (1 + lambda^2)^2."""
    l2 = _check_unit(lam, "lambda") ** 2
    return _out(4.0 * l2 * (1.0 - l2) / (1.0 + l2) ** 2)


def lambda_from_mu(m):
    """Inverse of mu_from_lambda on [0, 1].

    With u = lambda^2, m u^2 + (2m - 4) u + m = 0; the root in [0, 1] is
    u = m / ((2 - m) + 2 sqrt(1 - m)) (the roots multiply to 1).
    """
    m = _check_unit(m, "|mu|^2")
    u = m / ((2.0 - m) + 2.0 * np.sqrt(1.0 - m))
    return _out(np.sqrt(u))


def curvature_densities(lam):
    """(|A|^2, K_int) = (2 lambda^2, lambda^2 - 1)."""
    l2 = _check_unit(lam, "lambda") ** 2
    return _out(2.0 * l2), _out(l2 - 1.0)


def integrate_densities(lam, weights):
    """Quadrature of (|A|^2, K_int) for a sampled lambda-field.

    Returns (renormalised-area partial sum, total-curvature partial sum).
    """
    a2, k = curvature_densities(np.asarray(lam, dtype=float))
    w = np.asarray(weights, dtype=float)
    return float(np.sum(np.asarray(a2) * w)), float(np.sum(np.asarray(k) * w))


def shape_operator(lam: float, angle: float = 0.0):
    """Symmetric trace-free A with eigenvalues +-lambda, principal axes rotated by angle."""
    _check_unit(lam, "lambda")
    c, s = math.cos(angle), math.sin(angle)
    R = np.array([[c, -s], [s, c]])
    return R @ np.diag([lam, -lam]) @ R.T


@dataclass
class ShapeData:
    """Principal curvature lambda of a maximal surface, optionally with A itself."""
    lam: float
    A: Optional[np.ndarray] = None

    def __post_init__(self):
        _check_unit(self.lam, "lambda")
        if self.A is not None:
            A = np.asarray(self.A, dtype=float)
            if np.max(np.abs(A - A.T)) > 1e-10 or abs(np.trace(A)) > 1e-10:
                raise ValueError("A must be symmetric and trace-free")
            if abs(math.sqrt(max(-np.linalg.det(A), 0.0)) - self.lam) > 1e-10:
                raise ValueError("eigenvalues of A must be +-lambda")
            self.A = A

    @property
    def shape(self):
        return self.A if self.A is not None else shape_operator(self.lam)

    def mu_sq(self):
        return mu_from_lambda(self.lam)

    def mu_tilde_sq(self):
        return mu_tilde_sq(self.lam)

    def densities(self):
        return curvature_densities(self.lam)


__all__ = [
    "FrameInvalid",
    "OutOfRange",
    "SpacelikeFrame",
    "ShapeData",
    "in_upper_sheet",
    "gauss_maps",
    "on_quadric_error",
    "random_sl2",
    "random_frame",
    "geodesic_plane_frame",
    "conjugating_map",
    "PullbackMetrics",
    "pullback_metrics",
    "null_direction",
    "mu_from_lambda",
    "mu_tilde_sq",
    "lambda_from_mu",
    "curvature_densities",
    "integrate_densities",
    "shape_operator",
]
