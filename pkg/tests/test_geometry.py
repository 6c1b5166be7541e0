import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from fescycle.errors import DomainError, SingularityError
from fescycle.geometry import (
    RiderGeometry,
    chain_state,
    check_reachability,
    constraint_residual,
    forward_kinematics,
    inverse_kinematics,
    jacobian,
    psi_jacobian,
    reduction_vector_mu,
    reduction_vector_mu_dot,
)

angles = st.floats(0.0, 2.0 * math.pi, allow_nan=False)


def test_ik_matches_bisection_oracle(geo):
    for q3 in np.linspace(0.0, 2 * np.pi, 37):
        q1, q2 = inverse_kinematics(geo, q3)
        b1, b2 = oracles.ik_bisection(geo, q3)
        assert abs(math.remainder(q1 - b1, 2 * math.pi)) < 1e-12
        assert abs(q2 - b2) < 1e-12


def test_ik_unreachable_geometry_raises():
    short_leg = RiderGeometry(l1=0.4, l2=0.4, l3=0.17, cx=0.55, cy=-0.65)
    with pytest.raises(DomainError):
        inverse_kinematics(short_leg, 0.0)
    with pytest.raises(DomainError):
        check_reachability(short_leg)


def test_acos_clamp_absorbs_roundoff_only():
    from fescycle.geometry import ACOS_TOL, _clamped_acos

    assert _clamped_acos(1.0 + 0.5 * ACOS_TOL, "x") == 0.0
    assert _clamped_acos(-1.0 - 0.5 * ACOS_TOL, "x") == math.pi
    with pytest.raises(DomainError):
        _clamped_acos(1.0 + 1e-9, "x")


@given(angles)
@settings(max_examples=200, deadline=None)
def test_ik_closes_chain_on_branch(q3):
    g = RiderGeometry()
    q1, q2 = inverse_kinematics(g, q3)
    assert np.max(np.abs(constraint_residual(g, (q1, q2, q3)))) <= 1e-12
    assert math.pi < q2 < 2 * math.pi
    assert math.pi < q1 + q2 < 2 * math.pi


def test_forward_kinematics_matches_oracle(geo):
    knee, pedal = forward_kinematics(geo, 0.3, 4.0)
    k2, p2 = oracles.leg_points(geo, 0.3, 4.0)
    np.testing.assert_allclose(knee, k2, atol=1e-15)
    np.testing.assert_allclose(pedal, p2, atol=1e-15)


def test_jacobian_matches_finite_differences(geo):
    q1, q2 = 0.4, 4.3
    num = np.column_stack([
        oracles.central_diff(lambda x: oracles.leg_points(geo, x, q2)[1], q1),
        oracles.central_diff(lambda x: oracles.leg_points(geo, q1, x)[1], q2),
    ])
    np.testing.assert_allclose(jacobian(geo, q1, q2), num, rtol=1e-9, atol=1e-11)


def test_psi_jacobian_structure(geo):
    q = (0.4, 4.3, 1.0)
    P = psi_jacobian(geo, q)
    np.testing.assert_allclose(P[:2, :2], jacobian(geo, q[0], q[1]))
    np.testing.assert_array_equal(P[2], [0.0, 0.0, 1.0])


def test_singular_knee_raises(geo):
    with pytest.raises(SingularityError):
        jacobian(geo, 0.3, math.pi)


def test_mu_matches_finite_difference_of_ik(geo):
    for q3 in np.linspace(0.1, 6.2, 13):
        q = (*inverse_kinematics(geo, q3), q3)
        mu = reduction_vector_mu(geo, q)
        num = oracles.central_diff(lambda x: np.array(inverse_kinematics(geo, x)), q3)
        np.testing.assert_allclose(mu[:2], num, rtol=1e-6)
        assert mu[2] == 1.0


def test_mu_dot_matches_finite_difference(geo):
    w = 5.0
    for q3 in np.linspace(0.1, 6.2, 13):
        q = (*inverse_kinematics(geo, q3), q3)
        mud = reduction_vector_mu_dot(geo, q, w)

        def mu_at(x):
            return reduction_vector_mu(geo, (*inverse_kinematics(geo, x), x))

        num = oracles.central_diff(mu_at, q3) * w
        np.testing.assert_allclose(mud, num, rtol=1e-6, atol=1e-9)


def test_mu_is_null_space_of_constraint(geo):
    for q3 in np.linspace(0.0, 6.0, 7):
        q = np.array([*inverse_kinematics(geo, q3), q3])
        mu = reduction_vector_mu(geo, q)
        np.testing.assert_allclose(oracles.constraint_jacobian(geo, q) @ mu, 0.0, atol=1e-13)


def test_chain_state_consistent(geo):
    cs = chain_state(geo, 1.0, 3.0)
    q = (cs.q1, cs.q2, 1.0)
    np.testing.assert_allclose(reduction_vector_mu(geo, q)[:2], [cs.mu1, cs.mu2])
    np.testing.assert_allclose(reduction_vector_mu_dot(geo, q, 3.0)[:2], [cs.mu1dot, cs.mu2dot])


def test_reachability_reports_range(geo):
    lo, hi = check_reachability(geo)
    c = math.hypot(geo.cx, geo.cy)
    assert lo == pytest.approx(c - geo.l3)
    assert hi == pytest.approx(c + geo.l3)


def test_geometry_rejects_bad_lengths():
    with pytest.raises(DomainError):
        RiderGeometry(l1=-0.1)
    with pytest.raises(DomainError):
        RiderGeometry(cx=float("nan"))
