import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wpdiag.gauss import (
    FrameInvalid, OutOfRange, ShapeData, SpacelikeFrame, conjugating_map, curvature_densities, gauss_maps,
    geodesic_plane_frame, in_upper_sheet, integrate_densities, lambda_from_mu, mu_from_lambda,
    mu_tilde_sq, null_direction, on_quadric_error, pullback_metrics, random_frame, random_sl2,
    shape_operator,
)
from wpdiag.mobius import J, mat_inner

unit = st.floats(0.0, 1.0)


def test_identity_frame():
    Gl, Gr = gauss_maps(SpacelikeFrame(np.eye(2), J))
    assert np.allclose(Gl, J) and np.allclose(Gr, J)
    assert in_upper_sheet(Gl) and in_upper_sheet(Gr)


def test_frame_validation():
    with pytest.raises(FrameInvalid):
        SpacelikeFrame(2 * np.eye(2), J)
    with pytest.raises(FrameInvalid):
        SpacelikeFrame(np.eye(2), np.eye(2))


def test_left_action_and_flow():
    rng = np.random.default_rng(11)
    for _ in range(50):
        f = random_frame(rng)
        Gl, Gr = gauss_maps(f)
        assert on_quadric_error(Gl) < 1e-9 and on_quadric_error(Gr) < 1e-9
        A = random_sl2(rng)
        Gl2, Gr2 = gauss_maps(f.act(A, np.eye(2)))
        assert np.allclose(Gl2, Gl, atol=1e-9)
        assert np.allclose(Gr2, A @ Gr @ np.linalg.inv(A), atol=1e-9)
        for t in np.linspace(-3, 3, 13):
            Gl3, Gr3 = gauss_maps(f.flow(t))
            assert np.allclose(Gl3, Gl, atol=1e-9) and np.allclose(Gr3, Gr, atol=1e-9)


def test_geodesic_plane_single_mobius():
    rng = np.random.default_rng(5)
    A, B = random_sl2(rng), random_sl2(rng)
    frames = []
    for _ in range(100):
        P = random_sl2(rng)
        S = P @ P.T
        S /= math.sqrt(np.linalg.det(S))
        f = geodesic_plane_frame(S)
        assert mat_inner(f.M, J) == pytest.approx(0.0, abs=1e-12)
        frames.append(f.act(A, B))
    C, res = conjugating_map(frames)
    assert res < 1e-9
    # the fixed plane itself: G_r = G_l = J everywhere, C is the identity class
    C0, res0 = conjugating_map([geodesic_plane_frame(np.eye(2))] * 3 +
                               [geodesic_plane_frame(np.diag([2.0, 0.5]))])
    assert res0 < 1e-12


def test_pullback_zero_shape():
    g = np.array([[2.0, 0.3], [0.3, 1.0]])
    # a complex structure orthogonal for g: rotation by 90 degrees in a g-orthonormal frame
    L = np.linalg.cholesky(g)
    Jc = np.linalg.inv(L.T) @ J @ L.T
    pm = pullback_metrics(g, Jc, np.zeros((2, 2)))
    assert np.allclose(pm.g_l, g) and np.allclose(pm.g_r, g)
    assert not pm.degenerate


@pytest.mark.parametrize("angle", [0.0, 0.4, 1.3])
def test_pullback_degenerate_at_one(angle):
    A = shape_operator(1.0, angle)
    pm = pullback_metrics(np.eye(2), J, A)
    assert pm.degenerate_l and pm.degenerate_r
    v = null_direction(A + J)
    # the null direction of g_l is the +1 eigendirection of J A (equivalently the
    # -1 eigendirection of A J); the -1 eigendirection of J A is null for g_r
    assert np.allclose(J @ A @ v, v, atol=1e-12)
    assert v @ pm.g_l @ v == pytest.approx(0.0, abs=1e-12)
    w = null_direction(A - J)
    assert np.allclose(J @ A @ w, -w, atol=1e-12)


@settings(max_examples=100)
@given(unit, st.floats(0, math.pi))
def test_det_identity(lam, angle):
    A = shape_operator(lam, angle)
    for s in (1, -1):
        assert np.linalg.det(A + s * J) == pytest.approx(np.linalg.det(A) + 1, abs=1e-12)
        assert np.linalg.det(A + s * J) == pytest.approx(1 - lam * lam, abs=1e-12)


def test_dictionary_examples():
    assert mu_from_lambda(0.0) == 0.0 and mu_tilde_sq(0.0) == 0.0
    assert mu_from_lambda(1.0) == 1.0 and mu_tilde_sq(1.0) == 0.0
    assert mu_from_lambda(0.5) == pytest.approx(16 / 25)
    assert mu_tilde_sq(0.5) == pytest.approx(12 / 25)
    assert curvature_densities(0.5) == pytest.approx((0.5, -0.75))
    assert integrate_densities(np.zeros(10), np.full(10, 0.1))[0] == 0.0
    lam = 0.7
    a, k = integrate_densities(np.full(100, lam), np.full(100, 0.01))
    assert a == pytest.approx(2 * lam ** 2) and k == pytest.approx(lam ** 2 - 1)
    for bad in (1.5, -0.1, math.nan):
        with pytest.raises(OutOfRange):
            mu_from_lambda(bad)


def test_roundtrip_grid():
    lam = np.linspace(0.0, 1 - 1e-6, 20001)
    assert np.max(np.abs(lambda_from_mu(mu_from_lambda(lam)) - lam)) < 1e-10
    assert np.all(np.diff(mu_from_lambda(np.linspace(0, 1, 2001))) > 0)


@given(st.floats(0.0, 1 - 1e-6))
def test_roundtrip_property(lam):
    assert lambda_from_mu(mu_from_lambda(lam)) == pytest.approx(lam, abs=1e-10)


@given(unit)
def test_mu_tilde_le_mu(lam):
    assert mu_tilde_sq(lam) <= mu_from_lambda(lam)
    if lam > 1e-8:
        assert mu_tilde_sq(lam) < mu_from_lambda(lam)


def test_shape_data():
    sd = ShapeData(0.5)
    assert sd.mu_sq() == pytest.approx(16 / 25) and sd.mu_tilde_sq() == pytest.approx(12 / 25)
    assert np.allclose(np.linalg.eigvalsh(sd.shape), [-0.5, 0.5])
    assert ShapeData(0.3, shape_operator(0.3, 1.1)).densities() == pytest.approx((0.18, -0.91))
    with pytest.raises(ValueError):
        ShapeData(0.3, shape_operator(0.4))
    with pytest.raises(OutOfRange):
        ShapeData(1.2)
