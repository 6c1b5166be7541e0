"""Independent reference computations used by the tests.

Nothing here imports the package's kinematics or dynamics code: the leg is
solved by bisection, the open-chain inertia comes from link Jacobians, the
velocity terms from finite differences of the kinetic energy, and the closed
chain is integrated as a Baumgarte-stabilized DAE.
"""

import math

import numpy as np
from scipy.integrate import solve_ivp


def bisect(f, lo, hi, tol=1e-15, iters=200):
    flo = f(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def pedal_point(geo, q3):
    return np.array([geo.l3 * math.cos(q3) + geo.cx, geo.l3 * math.sin(q3) + geo.cy])


def ik_bisection(geo, q3):
    """Knee angle on (pi, 2pi) by bisection on the hip-pedal distance, then the hip angle."""
    p = pedal_point(geo, q3)
    d = float(np.hypot(*p))

    def reach(q2):
        return math.sqrt(geo.l1**2 + geo.l2**2 + 2 * geo.l1 * geo.l2 * math.cos(q2)) - d

    q2 = bisect(reach, math.pi, 2 * math.pi)
    # direction of the leg's reach vector for q1 = 0
    lead = math.atan2(geo.l2 * math.sin(q2), geo.l1 + geo.l2 * math.cos(q2))
    q1 = math.atan2(p[1], p[0]) - lead
    return q1, q2


def leg_points(geo, q1, q2):
    knee = np.array([geo.l1 * math.cos(q1), geo.l1 * math.sin(q1)])
    foot = knee + geo.l2 * np.array([math.cos(q1 + q2), math.sin(q1 + q2)])
    return knee, foot


def central_diff(f, x, h=1e-5):
    """Fourth-order central difference of a scalar or array valued ``f``."""
    return (-np.asarray(f(x + 2 * h)) + 8 * np.asarray(f(x + h)) - 8 * np.asarray(f(x - h)) + np.asarray(f(x - 2 * h))) / (12 * h)


# -- open chain from first principles -------------------------------------------


def link_jacobians(body, geo, q):
    q1, q2 = q[0], q[1]
    s1, c1 = math.sin(q1), math.cos(q1)
    s12, c12 = math.sin(q1 + q2), math.cos(q1 + q2)
    a, b, l1 = body.thigh_com, body.shank_com, geo.l1
    jv1 = np.array([[-a * s1, 0, 0], [a * c1, 0, 0]])
    jv2 = np.array([[-l1 * s1 - b * s12, -b * s12, 0], [l1 * c1 + b * c12, b * c12, 0]])
    jw1 = np.array([1.0, 0, 0])
    jw2 = np.array([1.0, 1.0, 0])
    jw3 = np.array([0, 0, 1.0])
    return jv1, jv2, jw1, jw2, jw3


def mass_matrix(body, geo, q):
    jv1, jv2, jw1, jw2, jw3 = link_jacobians(body, geo, q)
    return (
        body.thigh_mass * jv1.T @ jv1
        + body.shank_mass * jv2.T @ jv2
        + body.thigh_inertia * np.outer(jw1, jw1)
        + body.shank_inertia * np.outer(jw2, jw2)
        + body.crank_inertia * np.outer(jw3, jw3)
    )


def potential(body, geo, q):
    y1 = body.thigh_com * math.sin(q[0])
    y2 = geo.l1 * math.sin(q[0]) + body.shank_com * math.sin(q[0] + q[1])
    return body.gravity * (body.thigh_mass * y1 + body.shank_mass * y2)


def velocity_terms(body, geo, q, qd, h=1e-6):
    """``C(q, qd) qd = Mdot qd - 0.5 grad_q(qd' M qd)`` by central differences."""
    q = np.asarray(q, dtype=float)
    mdot = np.zeros((3, 3))
    grad = np.zeros(3)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        mp, mm = mass_matrix(body, geo, q + e), mass_matrix(body, geo, q - e)
        dm = (mp - mm) / (2 * h)
        mdot += dm * qd[k]
        grad[k] = 0.5 * qd @ dm @ qd
    return mdot @ qd - grad


def gravity_torque(body, geo, q, h=1e-6):
    g = np.zeros(3)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        g[k] = (potential(body, geo, q + e) - potential(body, geo, q - e)) / (2 * h)
    return g


def passive_torque(pp, q, qd):
    """Hip and knee elastic plus viscous moments; the crank joint is free."""
    q1, q2 = q[0], q[1]
    e1 = -pp.k11 * math.exp(-pp.k12 * q1) * (q1 - pp.k13)
    e2 = -pp.k21 * math.exp(-pp.k22 * q2) * (q2 - pp.k23)
    v1 = pp.b11 * math.tanh(-pp.b12 * qd[0]) - pp.b13 * qd[0]
    v2 = pp.b21 * math.tanh(-pp.b22 * qd[1]) - pp.b23 * qd[1]
    return np.array([e1 + v1, e2 + v2, 0.0])


def constraint(geo, q):
    q1, q2, q3 = q
    return np.array(
        [
            geo.l1 * math.cos(q1) + geo.l2 * math.cos(q1 + q2) - geo.l3 * math.cos(q3) - geo.cx,
            geo.l1 * math.sin(q1) + geo.l2 * math.sin(q1 + q2) - geo.l3 * math.sin(q3) - geo.cy,
        ]
    )


def constraint_jacobian(geo, q):
    q1, q2, q3 = q
    s1, c1 = math.sin(q1), math.cos(q1)
    s12, c12 = math.sin(q1 + q2), math.cos(q1 + q2)
    return np.array(
        [
            [-geo.l1 * s1 - geo.l2 * s12, -geo.l2 * s12, geo.l3 * math.sin(q3)],
            [geo.l1 * c1 + geo.l2 * c12, geo.l2 * c12, -geo.l3 * math.cos(q3)],
        ]
    )


def constraint_drift(geo, q, qd):
    """``d/dt(A) qd`` for the loop-closure constraint."""
    q1, q2, q3 = q
    w1, w12, w3 = qd[0], qd[0] + qd[1], qd[2]
    return np.array(
        [
            -geo.l1 * math.cos(q1) * w1**2 - geo.l2 * math.cos(q1 + q2) * w12**2 + geo.l3 * math.cos(q3) * w3**2,
            -geo.l1 * math.sin(q1) * w1**2 - geo.l2 * math.sin(q1 + q2) * w12**2 + geo.l3 * math.sin(q3) * w3**2,
        ]
    )


def closed_chain_initial(geo, q3, q3dot):
    q1, q2 = ik_bisection(geo, q3)
    q = np.array([q1, q2, q3])
    a = constraint_jacobian(geo, q)
    # A [q1d, q2d]^T = -A[:, 2] q3d
    q12d = np.linalg.solve(a[:, :2], -a[:, 2] * q3dot)
    return q, np.array([q12d[0], q12d[1], q3dot])


def baumgarte_free_response(body, geo, pp, q3, q3dot, t_eval, alpha=20.0, beta=20.0, disturbance=None):
    """Unactuated closed chain as an index-1 DAE with Baumgarte stabilization.

    ``disturbance(t)`` is an optional crank torque (N m) opposing positive
    crank rotation.
    """
    q0, qd0 = closed_chain_initial(geo, q3, q3dot)

    def rhs(t, x):
        q, qd = x[:3], x[3:]
        m = mass_matrix(body, geo, q)
        a = constraint_jacobian(geo, q)
        tau = passive_torque(pp, q, qd) - velocity_terms(body, geo, q, qd) - gravity_torque(body, geo, q)
        if disturbance is not None:
            tau[2] -= disturbance(t)
        rhs_c = -constraint_drift(geo, q, qd) - 2 * alpha * (a @ qd) - beta**2 * constraint(geo, q)
        kkt = np.zeros((5, 5))
        kkt[:3, :3] = m
        kkt[:3, 3:] = -a.T
        kkt[3:, :3] = a
        sol = np.linalg.solve(kkt, np.concatenate([tau, rhs_c]))
        return np.concatenate([qd, sol[:3]])

    res = solve_ivp(rhs, (t_eval[0], t_eval[-1]), np.concatenate([q0, qd0]), method="DOP853",
                    t_eval=t_eval, rtol=1e-11, atol=1e-12)
    if not res.success:
        raise RuntimeError(res.message)
    return res.y


def energy(body, geo, q, qd):
    return 0.5 * qd @ mass_matrix(body, geo, q) @ qd + potential(body, geo, q)


# -- polynomial oracle for the finite-difference stencils ----------------------


def smooth_test_signal(t):
    return np.sin(3.0 * t) + 0.5 * np.cos(7.0 * t)


def smooth_test_signal_d1(t):
    return 3.0 * np.cos(3.0 * t) - 3.5 * np.sin(7.0 * t)


def smooth_test_signal_d2(t):
    return -9.0 * np.sin(3.0 * t) - 24.5 * np.cos(7.0 * t)
