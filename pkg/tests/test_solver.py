import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from lieicp.core import RigidTransform, axis_angle_rotation, mse, rotation_geodesic_error
from lieicp.solver import (build_M, cross_covariance, horn_solve, principal_eigenvector_4,
                           quaternion_to_rotation, swc_covariance)


def quat_sandwich(q, x):
    """Rotate x by q via q * (0, x) * conj(q) with explicit Hamilton products."""
    def mul(a, b):
        a0, a1, a2, a3 = a
        b0, b1, b2, b3 = b
        return np.array([a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
                         a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
                         a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
                         a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0])
    conj = np.array([q[0], -q[1], -q[2], -q[3]])
    return mul(mul(q, np.r_[0.0, x]), conj)[1:]


def test_quaternion_matches_sandwich(rng):
    for _ in range(50):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        R = quaternion_to_rotation(q)
        x = rng.normal(size=3)
        assert np.allclose(R @ x, quat_sandwich(q, x), atol=1e-14)
    with pytest.raises(ValueError):
        quaternion_to_rotation([1.0, 1.0, 0.0, 0.0])


def test_build_M_is_symmetric_traceless(rng):
    M = build_M(rng.normal(size=(3, 3)))
    assert np.allclose(M, M.T)
    assert abs(np.trace(M)) < 1e-14


def test_principal_eigenvector_sign(rng):
    v, w = principal_eigenvector_4(np.diag([-1.0, 3.0, 0.0, 0.0]))
    assert np.allclose(v, [0, 1, 0, 0]) and w[0] == 3.0
    for _ in range(20):
        B = rng.normal(size=(4, 4))
        v, _ = principal_eigenvector_4(B + B.T)
        assert v[0] >= 0 and abs(np.linalg.norm(v) - 1) < 1e-15


def test_recovers_ground_truth(rng):
    for _ in range(100):
        n = int(rng.integers(3, 60))
        X = rng.normal(size=(n, 3))
        R = Rotation.random(random_state=rng).as_matrix()
        t = rng.normal(size=3) * 3
        T = horn_solve(X, X @ R.T + t)
        assert rotation_geodesic_error(T.R, R) < 1e-9
        assert np.linalg.norm(T.t - t) < 1e-9


def test_pure_translation():
    X = np.random.default_rng(1).normal(size=(10, 3))
    T = horn_solve(X, X + [1.0, -2.0, 0.5])
    assert np.allclose(T.R, np.eye(3), atol=1e-10)
    assert np.allclose(T.t, [1.0, -2.0, 0.5], atol=1e-10)


def test_180_degree_rotation(rng):
    X = rng.normal(size=(20, 3))
    R = axis_angle_rotation([0, 0, 1], np.pi)
    T = horn_solve(X, X @ R.T)
    assert rotation_geodesic_error(T.R, R) < 1e-9


def test_optimality_against_perturbations(rng):
    X = rng.normal(size=(30, 3))
    R = Rotation.random(random_state=rng).as_matrix()
    Y = X @ R.T + 0.05 * rng.normal(size=(30, 3))
    T = horn_solve(X, Y)
    best = mse(X, Y, T)
    assert best <= mse(X, Y, RigidTransform(R, np.zeros(3))) + 1e-15
    for _ in range(100):
        dR = Rotation.from_rotvec(rng.normal(size=3) * 1e-3).as_matrix()
        P = RigidTransform(dR @ T.R, T.t + rng.normal(size=3) * 1e-3, repair=True)
        assert best <= mse(X, Y, P) + 1e-15


def test_swc_zero_omega_equals_plain(rng):
    X = rng.normal(size=(25, 3))
    Y = X @ Rotation.random(random_state=rng).as_matrix().T + 0.01 * rng.normal(size=(25, 3))
    S = rng.normal(size=(25, 3))
    a = cross_covariance(X, Y).matrix
    b = swc_covariance(X, S, Y, 0.0).matrix
    assert np.allclose(a, b, atol=1e-14)
    Ta, Tb = horn_solve(X, Y), horn_solve(X, Y, S, 0.0)
    assert np.allclose(Ta.R, Tb.R, atol=1e-14) and np.allclose(Ta.t, Tb.t, atol=1e-14)


def test_swc_large_omega_follows_partners(rng):
    # with exact shape partners the substituted covariance still recovers the rotation
    X = rng.normal(size=(25, 3))
    R = Rotation.random(random_state=rng).as_matrix()
    Y = X @ R.T
    T = horn_solve(X, Y, X, 50.0)
    assert rotation_geodesic_error(T.R, R) < 1e-9


def test_degenerate_flag_for_collinear_points():
    X = np.outer(np.arange(5.0), [1.0, 2.0, 3.0])
    _, info = horn_solve(X, X, full_output=True)
    assert info["degenerate"]
    _, info = horn_solve(np.eye(3) * [1, 2, 3], np.eye(3) * [1, 2, 3], full_output=True)
    assert not info["degenerate"]


def test_input_validation():
    with pytest.raises(ValueError):
        horn_solve(np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        horn_solve(np.zeros((4, 3)), np.zeros((5, 3)))


@given(st.integers(3, 40), st.integers(0, 2**31))
@settings(max_examples=60, deadline=None)
def test_output_is_rotation(n, seed):
    g = np.random.default_rng(seed)
    T = horn_solve(g.normal(size=(n, 3)), g.normal(size=(n, 3)))
    assert np.allclose(T.R.T @ T.R, np.eye(3), atol=1e-10)
    assert abs(np.linalg.det(T.R) - 1) < 1e-10
