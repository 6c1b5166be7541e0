"""Muscle torque gains and the pedal forces they induce.

Each stimulated muscle ``i`` produces a joint torque ``Omega_i * u_i`` with
``Omega_i = zeta_i * eta_i * cos(a_i)`` (moment arm, voltage-to-force gain,
pennation).  Through the leg Jacobian that torque becomes a pedal force with
magnitude ``R_i * tau_i`` and direction ``theta_i``; the four stimulated
groups combine these into one force vector per volt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np

from .errors import DegenerateForceError, ModelError, SingularityError
from .geometry import SINGULAR_TOL, RiderGeometry


class MuscleId(str, Enum):
    E1 = "e1"  # hip extensors (gluteals)
    E2 = "e2"  # knee extensors (vasti)
    F2 = "f2"  # knee flexor (biceps femoris short head)
    EF3 = "ef3"  # hip extensor / knee flexor (long hamstrings)
    FE3 = "fe3"  # hip flexor / knee extensor (rectus femoris)
    F4 = "f4"  # gastrocnemius, acting as a knee flexor


class MuscleGroupId(str, Enum):
    GLUT = "Glut"
    HAM = "Ham"
    GAST = "Gast"
    QUAD = "Quad"


GROUPS = (MuscleGroupId.GLUT, MuscleGroupId.HAM, MuscleGroupId.GAST, MuscleGroupId.QUAD)


@dataclass(frozen=True)
class MuscleModel:
    """Parametric curves for one muscle.

    moment_arm
        ``(c0, a1, b1, a2, b2, a3, b3)``:
        ``zeta(q3) = c0 + sum_k a_k cos(k q3) + b_k sin(k q3)`` in metres.
    pennation
        ``(p0, p1, phase)``: ``a(q3) = p0 + p1 cos(q3 - phase)`` in radians.
    recruitment
        ``(gain, depth, phase, cadence)``:
        ``eta = gain (1 + depth cos(q3 - phase)) / (1 + cadence max(v, 0))``
        in N/V, where ``v`` is the forward crank rate; never below
        ``eta_floor``.
    """

    moment_arm: tuple = (0.05, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    pennation: tuple = (0.1, 0.0, 0.0)
    recruitment: tuple = (100.0, 0.0, 0.0, 0.0)
    eta_floor: float = 1e-3
    omega_floor: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "moment_arm", tuple(float(v) for v in self.moment_arm))
        object.__setattr__(self, "pennation", tuple(float(v) for v in self.pennation))
        object.__setattr__(self, "recruitment", tuple(float(v) for v in self.recruitment))
        if len(self.moment_arm) != 7 or len(self.pennation) != 3 or len(self.recruitment) != 4:
            raise ModelError("moment_arm needs 7 coefficients, pennation 3, recruitment 4")
        c0 = self.moment_arm[0]
        ripple = sum(math.hypot(self.moment_arm[k], self.moment_arm[k + 1]) for k in (1, 3, 5))
        if c0 - ripple <= 0.0:
            raise ModelError("moment arm can become non-positive")
        p0, p1, _ = self.pennation
        if abs(p0) + abs(p1) >= math.pi / 2:
            raise ModelError("pennation angle can reach pi/2")
        gain, depth, _, cadence = self.recruitment
        if gain <= 0.0 or cadence < 0.0 or self.eta_floor <= 0.0:
            raise ModelError("recruitment gain and floor must be positive, cadence slope >= 0")
        if self.omega_floor <= 0.0:
            raise ModelError("omega_floor must be positive")

    def moment_arm_at(self, q3: float) -> float:
        c = self.moment_arm
        return (
            c[0]
            + c[1] * math.cos(q3) + c[2] * math.sin(q3)
            + c[3] * math.cos(2.0 * q3) + c[4] * math.sin(2.0 * q3)
            + c[5] * math.cos(3.0 * q3) + c[6] * math.sin(3.0 * q3)
        )

    def pennation_at(self, q3: float) -> float:
        p0, p1, phase = self.pennation
        return p0 + p1 * math.cos(q3 - phase)

    def recruitment_at(self, q3: float, cadence: float) -> float:
        gain, depth, phase, slope = self.recruitment
        eta = gain * (1.0 + depth * math.cos(q3 - phase)) / (1.0 + slope * max(cadence, 0.0))
        return max(eta, self.eta_floor)

    def omega(self, q3: float, cadence: float) -> float:
        zeta = self.moment_arm_at(q3)
        eta = self.recruitment_at(q3, cadence)
        cos_a = math.cos(self.pennation_at(q3))
        if zeta <= 0.0 or eta <= 0.0 or cos_a <= 0.0:
            raise ModelError(f"non-positive torque factor at q3={q3:.6f}")
        value = zeta * eta * cos_a
        if value < self.omega_floor:
            raise ModelError(f"torque gain {value:.3e} below floor {self.omega_floor:.3e}")
        return value

    def bounds(self, cadence_max: float) -> tuple[float, float]:
        """Analytic ``(lower, upper)`` bounds of ``omega`` for cadence in ``[0, cadence_max]``."""
        c0 = self.moment_arm[0]
        ripple = sum(math.hypot(self.moment_arm[k], self.moment_arm[k + 1]) for k in (1, 3, 5))
        p0, p1, _ = self.pennation
        a_lo, a_hi = p0 - abs(p1), p0 + abs(p1)
        cos_lo = math.cos(max(abs(a_lo), abs(a_hi)))
        cos_hi = 1.0 if a_lo <= 0.0 <= a_hi else math.cos(min(abs(a_lo), abs(a_hi)))
        gain, depth, _, slope = self.recruitment
        eta_hi = max(gain * (1.0 + abs(depth)), self.eta_floor)
        eta_lo = max(gain * (1.0 - abs(depth)) / (1.0 + slope * max(cadence_max, 0.0)), self.eta_floor)
        return (c0 - ripple) * eta_lo * cos_lo, (c0 + ripple) * eta_hi * cos_hi


def default_muscles() -> dict:
    """Plausible, fully configurable curves; not identified from any subject."""
    return {
        MuscleId.E1: MuscleModel((0.060, 0.008, -0.004, 0.002, 0.0, 0.0, 0.0), (0.10, 0.05, 0.5), (820.0, 0.0, 5.81, 0.02)),
        MuscleId.E2: MuscleModel((0.045, 0.006, 0.004, -0.002, 0.001, 0.0, 0.0), (0.20, 0.06, 5.5), (2.5, 0.0, 0.13, 0.02)),
        MuscleId.F2: MuscleModel((0.030, -0.004, 0.003, 0.001, 0.0, 0.0, 0.0), (0.15, 0.05, 2.0), (850.0, 0.90, 5.08, 0.02)),
        MuscleId.EF3: MuscleModel((0.050, 0.005, 0.005, 0.0, -0.001, 0.0, 0.0), (0.18, 0.05, 1.2), (352.0, 0.0, 5.82, 0.02)),
        MuscleId.FE3: MuscleModel((0.040, -0.005, 0.003, 0.001, 0.001, 0.0, 0.0), (0.10, 0.04, 3.5), (1118.0, 0.54, 0.92, 0.02)),
        MuscleId.F4: MuscleModel((0.035, 0.004, -0.003, 0.0, 0.001, 0.0, 0.0), (0.25, 0.06, 2.8), (1656.0, 0.69, 4.62, 0.02)),
    }


def omega_scalar(models: Mapping, i: MuscleId, q3: float, cadence: float) -> float:
    """Torque per volt of muscle ``i`` (N m / V)."""
    return models[MuscleId(i)].omega(q3, cadence)


@dataclass(frozen=True)
class ForceGeometry:
    """Pedal-force magnitude per unit joint torque (1/m) and its direction (rad)."""

    R: float
    theta: float

    @property
    def unit(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta)])


def _pedal_direction(geom: RiderGeometry, q1: float, q2: float) -> float:
    return math.atan2(
        geom.l1 * math.sin(q1) + geom.l2 * math.sin(q1 + q2),
        geom.l1 * math.cos(q1) + geom.l2 * math.cos(q1 + q2),
    )


def knee_line_sine(geom: RiderGeometry, q2: float) -> float:
    """``sin q0``: sine of the angle from the shank to the hip-pedal line."""
    l1, l2 = geom.l1, geom.l2
    return -l1 * math.sin(q2) / math.sqrt(l1 * l1 + l2 * l2 + 2.0 * l1 * l2 * math.cos(q2))


def force_geometry(geom: RiderGeometry, i: MuscleId, q1: float, q2: float) -> ForceGeometry:
    """Magnitude factor ``R_i`` and direction ``theta_i`` of muscle ``i``'s pedal force."""
    i = MuscleId(i)
    s2 = math.sin(q2)
    if abs(s2) < SINGULAR_TOL:
        raise SingularityError(f"knee angle {q2:.6f} rad is singular")
    if i in (MuscleId.E1,):
        return ForceGeometry(abs(1.0 / (geom.l1 * s2)), q1 + q2)
    if i in (MuscleId.FE3, MuscleId.EF3):
        theta = q1 if i is MuscleId.FE3 else q1 - math.pi
        return ForceGeometry(abs(1.0 / (geom.l2 * s2)), theta)
    s0 = knee_line_sine(geom, q2)
    if abs(s0) < SINGULAR_TOL:
        raise SingularityError("hip-pedal line parallel to the shank")
    phi = _pedal_direction(geom, q1, q2)
    theta = phi if i is MuscleId.E2 else phi - math.pi
    return ForceGeometry(abs(1.0 / (geom.l2 * s0)), theta)


def hip_flexor_geometry(geom: RiderGeometry, q1: float, q2: float) -> ForceGeometry:
    """``(R, theta)`` of the single-joint hip flexor, the antagonist of ``e1``.

    It is not part of any stimulated group, so it has no :class:`MuscleId`.
    """
    e1 = force_geometry(geom, MuscleId.E1, q1, q2)
    return ForceGeometry(e1.R, e1.theta - math.pi)


def _group_vectors(geom: RiderGeometry, omegas: Mapping, q1: float, q2: float) -> dict:
    """All four group vectors from per-muscle gains; scalar-math fast path."""
    l1, l2 = geom.l1, geom.l2
    s2 = math.sin(q2)
    if abs(s2) < SINGULAR_TOL:
        raise SingularityError(f"knee angle {q2:.6f} rad is singular")
    c1, s1 = math.cos(q1), math.sin(q1)
    c12, s12 = math.cos(q1 + q2), math.sin(q1 + q2)
    px, py = l1 * c1 + l2 * c12, l1 * s1 + l2 * s12
    rho = math.hypot(px, py)
    # sin q0 = -l1 S2 / |pedal|; cos/sin of theta_e2 = pedal direction
    s0 = -l1 * s2 / rho
    if abs(s0) < SINGULAR_TOL:
        raise SingularityError("hip-pedal line parallel to the shank")
    ux, uy = px / rho, py / rho
    r1 = abs(1.0 / (l1 * s2))
    r0 = abs(1.0 / (l2 * s0))
    r3 = abs(1.0 / (l2 * s2))
    w_e1 = r1 * omegas[MuscleId.E1]
    w_f2 = r0 * omegas[MuscleId.F2]
    w_e2 = r0 * omegas[MuscleId.E2]
    w_f4 = r0 * omegas[MuscleId.F4]
    w_ef3 = r3 * omegas[MuscleId.EF3]
    w_fe3 = r3 * omegas[MuscleId.FE3]
    return {
        MuscleGroupId.GLUT: (w_e1 * c12, w_e1 * s12),
        MuscleGroupId.HAM: (-w_f2 * ux - w_ef3 * c1, -w_f2 * uy - w_ef3 * s1),
        MuscleGroupId.GAST: (-w_f4 * ux, -w_f4 * uy),
        MuscleGroupId.QUAD: (w_e2 * ux + w_fe3 * c1, w_e2 * uy + w_fe3 * s1),
    }


def muscle_omegas(models: Mapping, q3: float, cadence: float) -> dict:
    return {m: models[m].omega(q3, cadence) for m in MuscleId}


def group_force_vectors(models: Mapping, geom: RiderGeometry, q1: float, q2: float, q3: float, cadence: float) -> dict:
    """Pedal force per volt (N/V) for every group, as 2-vectors."""
    vecs = _group_vectors(geom, muscle_omegas(models, q3, cadence), q1, q2)
    return {g: np.array(v) for g, v in vecs.items()}


def group_force_vector(models: Mapping, geom: RiderGeometry, s: MuscleGroupId, q1, q2, q3, cadence) -> np.ndarray:
    return group_force_vectors(models, geom, q1, q2, q3, cadence)[MuscleGroupId(s)]


def omega_chi(vectors: Mapping, chi: Mapping, l3: float, floor: float = 1e-9) -> float:
    """Crank torque per volt delivered by the weighted group forces."""
    fx = sum(chi.get(g, 0.0) * vectors[g][0] for g in GROUPS)
    fy = sum(chi.get(g, 0.0) * vectors[g][1] for g in GROUPS)
    norm = math.hypot(fx, fy)
    if norm < floor:
        raise DegenerateForceError(f"combined pedal force {norm:.3e} N/V below floor {floor:.1e}")
    return norm * l3
