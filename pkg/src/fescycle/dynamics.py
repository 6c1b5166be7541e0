"""Rigid-body dynamics of the thigh-shank-crank mechanism.

The unconstrained system is a planar 2R chain (thigh, shank) hinged at the
hip plus an independent crank rotor.  Gravity acts along ``-y`` with the hip
as origin.  Loop closure is handled by the velocity map ``mu`` from
:mod:`fescycle.geometry`, which collapses everything onto the crank angle::

    M(q) qddot + C(q, qdot) qdot + g(q) = tau

with ``M = mu' M' mu``, ``C = mu' (M' mudot + C' mu)`` and ``g = mu' g'``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ModelError
from .geometry import ChainState, FullState, RiderGeometry, chain_state


@dataclass(frozen=True)
class BodyParams:
    """Segment inertial parameters.

    COM distances are measured from the proximal joint along the link.  The
    default inertias are those of uniform rods with the default link lengths.
    """

    thigh_mass: float = 8.0
    thigh_com: float = 0.22
    thigh_inertia: float = 8.0 * 0.44**2 / 12.0
    shank_mass: float = 4.5
    shank_com: float = 0.225
    shank_inertia: float = 4.5 * 0.45**2 / 12.0
    crank_inertia: float = 0.1
    gravity: float = 9.81

    def __post_init__(self):
        for name in ("thigh_mass", "thigh_inertia", "shank_mass", "shank_inertia", "crank_inertia"):
            if not getattr(self, name) >= 0.0:
                raise ModelError(f"{name} must be non-negative")
        if not (self.thigh_com >= 0.0 and self.shank_com >= 0.0):
            raise ModelError("COM distances must be non-negative")

    def check_against(self, geom: RiderGeometry) -> None:
        if self.thigh_com > geom.l1 or self.shank_com > geom.l2:
            raise ModelError("COM distance exceeds its link length")

    @classmethod
    def uniform_rods(cls, geom: RiderGeometry, thigh_mass=8.0, shank_mass=4.5, crank_inertia=0.1, gravity=9.81):
        return cls(
            thigh_mass=thigh_mass,
            thigh_com=geom.l1 / 2.0,
            thigh_inertia=thigh_mass * geom.l1**2 / 12.0,
            shank_mass=shank_mass,
            shank_com=geom.l2 / 2.0,
            shank_inertia=shank_mass * geom.l2**2 / 12.0,
            crank_inertia=crank_inertia,
            gravity=gravity,
        )


@dataclass(frozen=True)
class PassiveParams:
    """Joint elastic (k..) and viscous (b..) coefficients at hip (1) and knee (2)."""

    k11: float = 2.0
    k12: float = 0.2
    k13: float = -0.1
    k21: float = 1.5
    k22: float = 0.1
    k23: float = 4.8
    b11: float = 0.2
    b12: float = 4.0
    b13: float = 0.1
    b21: float = 0.2
    b22: float = 4.0
    b23: float = 0.1

    def __post_init__(self):
        for name, value in vars(self).items():
            if not math.isfinite(value):
                raise ModelError(f"{name} must be finite")
        if self.b13 < 0.0 or self.b23 < 0.0:
            raise ModelError("linear viscous coefficients b13, b23 must be non-negative")

    @classmethod
    def off(cls):
        return cls(**{name: 0.0 for name in vars(cls())})


@dataclass(frozen=True)
class DisturbanceSpec:
    """Biased sinusoid ``bias + amplitude*sin(frequency*t + phase)`` (N m)."""

    amplitude: float = 0.0
    frequency: float = 1.0
    phase: float = 0.0
    bias: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.amplitude, self.frequency, self.phase, self.bias)):
            raise ModelError("disturbance parameters must be finite")


@dataclass(frozen=True)
class ReducedDynamics:
    """Scalar crank-equation coefficients at one state."""

    M: float
    C: float
    g: float


class CrankTerms(NamedTuple):
    """Reduced coefficients plus the chain solution they were built from."""

    M: float
    C: float
    g: float
    Me: float
    Mv: float
    chain: ChainState


def _mass_matrix_2r(p: BodyParams, geom: RiderGeometry, c2: float):
    m1, m2, lc1, lc2, l1 = p.thigh_mass, p.shank_mass, p.thigh_com, p.shank_com, geom.l1
    m22 = p.shank_inertia + m2 * lc2 * lc2
    m12 = m22 + m2 * l1 * lc2 * c2
    m11 = p.thigh_inertia + m1 * lc1 * lc1 + m22 + m2 * (l1 * l1 + 2.0 * l1 * lc2 * c2)
    return m11, m12, m22


def full_dynamics(params: BodyParams, geom: RiderGeometry, state: FullState):
    """Inertia matrix, Coriolis matrix and gravity vector of the open chain.

    The Coriolis matrix uses Christoffel symbols, so ``Mdot - 2C`` is skew.
    """
    q1, q2 = state.q1, state.q2
    qd1, qd2 = state.q1dot, state.q2dot
    m11, m12, m22 = _mass_matrix_2r(params, geom, math.cos(q2))
    M = np.array([[m11, m12, 0.0], [m12, m22, 0.0], [0.0, 0.0, params.crank_inertia]])
    h = -params.shank_mass * geom.l1 * params.shank_com * math.sin(q2)
    C = np.array([[h * qd2, h * (qd1 + qd2), 0.0], [-h * qd1, 0.0, 0.0], [0.0, 0.0, 0.0]])
    G = gravity_vector(params, geom, q1, q2)
    return M, C, G


def gravity_vector(params: BodyParams, geom: RiderGeometry, q1: float, q2: float) -> np.ndarray:
    gc12 = params.gravity * params.shank_mass * params.shank_com * math.cos(q1 + q2)
    g1 = params.gravity * (params.thigh_mass * params.thigh_com + params.shank_mass * geom.l1) * math.cos(q1) + gc12
    return np.array([g1, gc12, 0.0])


def potential_energy(params: BodyParams, geom: RiderGeometry, q1: float, q2: float) -> float:
    y1 = params.thigh_com * math.sin(q1)
    y2 = geom.l1 * math.sin(q1) + params.shank_com * math.sin(q1 + q2)
    return params.gravity * (params.thigh_mass * y1 + params.shank_mass * y2)


def reduce_dynamics(M_full, C_full, g_full, mu, mu_dot) -> ReducedDynamics:
    """Project the open-chain terms onto the crank coordinate."""
    M_full, C_full = np.asarray(M_full), np.asarray(C_full)
    mu, mu_dot = np.asarray(mu), np.asarray(mu_dot)
    return ReducedDynamics(
        M=float(mu @ M_full @ mu),
        C=float(mu @ (M_full @ mu_dot + C_full @ mu)),
        g=float(mu @ np.asarray(g_full)),
    )


def _joint_passive(pp: PassiveParams, q1, q2, qd1, qd2):
    e1 = -pp.k11 * math.exp(-pp.k12 * q1) * (q1 - pp.k13)
    e2 = -pp.k21 * math.exp(-pp.k22 * q2) * (q2 - pp.k23)
    v1 = pp.b11 * math.tanh(-pp.b12 * qd1) - pp.b13 * qd1
    v2 = pp.b21 * math.tanh(-pp.b22 * qd2) - pp.b23 * qd2
    return e1, e2, v1, v2


def passive_moments(pp: PassiveParams, state: FullState, mu) -> tuple[float, float]:
    """Elastic and viscous joint moments mapped onto the crank."""
    e1, e2, v1, v2 = _joint_passive(pp, state.q1, state.q2, state.q1dot, state.q2dot)
    return float(mu[0] * e1 + mu[1] * e2), float(mu[0] * v1 + mu[1] * v2)


def disturbance(spec: DisturbanceSpec, t: float) -> float:
    return spec.bias + spec.amplitude * math.sin(spec.frequency * t + spec.phase)


def disturbance_rate(spec: DisturbanceSpec, t: float) -> float:
    return spec.amplitude * spec.frequency * math.cos(spec.frequency * t + spec.phase)


def crank_terms(
    params: BodyParams, geom: RiderGeometry, pp: PassiveParams, q3: float, q3dot: float
) -> CrankTerms:
    """Reduced ``M, C, g`` and passive moments at ``(q3, q3dot)``.

    Scalar fast path equivalent to :func:`full_dynamics` followed by
    :func:`reduce_dynamics` and :func:`passive_moments`; the simulator calls
    it a few hundred thousand times per run.
    """
    cs = chain_state(geom, q3, q3dot)
    q1, q2, mu1, mu2 = cs.q1, cs.q2, cs.mu1, cs.mu2
    m11, m12, m22 = _mass_matrix_2r(params, geom, math.cos(q2))
    M = mu1 * (m11 * mu1 + m12 * mu2) + mu2 * (m12 * mu1 + m22 * mu2) + params.crank_inertia
    # C' mu with q1dot = mu1*q3dot, q2dot = mu2*q3dot
    h = -params.shank_mass * geom.l1 * params.shank_com * math.sin(q2)
    cmu1 = h * (mu2 * q3dot) * mu1 + h * (mu1 + mu2) * q3dot * mu2
    cmu2 = -h * (mu1 * q3dot) * mu1
    C = mu1 * (m11 * cs.mu1dot + m12 * cs.mu2dot + cmu1) + mu2 * (m12 * cs.mu1dot + m22 * cs.mu2dot + cmu2)
    gc12 = params.gravity * params.shank_mass * params.shank_com * math.cos(q1 + q2)
    g1 = params.gravity * (params.thigh_mass * params.thigh_com + params.shank_mass * geom.l1) * math.cos(q1) + gc12
    g = mu1 * g1 + mu2 * gc12
    e1, e2, v1, v2 = _joint_passive(pp, q1, q2, mu1 * q3dot, mu2 * q3dot)
    return CrankTerms(M, C, g, mu1 * e1 + mu2 * e2, mu1 * v1 + mu2 * v2, cs)


def crank_energy(params: BodyParams, geom: RiderGeometry, q3: float, q3dot: float) -> float:
    """Kinetic plus gravitational energy of the closed chain."""
    cs = chain_state(geom, q3, q3dot)
    m11, m12, m22 = _mass_matrix_2r(params, geom, math.cos(cs.q2))
    M = cs.mu1 * (m11 * cs.mu1 + m12 * cs.mu2) + cs.mu2 * (m12 * cs.mu1 + m22 * cs.mu2) + params.crank_inertia
    return 0.5 * M * q3dot * q3dot + potential_energy(params, geom, cs.q1, cs.q2)
