"""Closed-chain kinematics of the seated rider.

The leg is a planar two-link chain (hip -> knee -> pedal) whose free end is
pinned to the crank circle.  With the hip at the origin and the crank centre
at ``(cx, cy)`` the two holonomic constraints read::

    l1*cos(q1) + l2*cos(q1 + q2) - l3*cos(q3) - cx = 0
    l1*sin(q1) + l2*sin(q1 + q2) - l3*sin(q3) - cy = 0

so only the crank angle ``q3`` is independent.  Angles are kept unwrapped;
only trigonometric evaluations see them modulo ``2*pi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DomainError, SingularityError

#: Arc-cosine arguments beyond +-1 by less than this are treated as roundoff.
ACOS_TOL = 1e-12
#: |sin q2| below this is treated as a fully extended/folded (singular) knee.
SINGULAR_TOL = 1e-9


@dataclass(frozen=True)
class RiderGeometry:
    """Link lengths (m) and crank-centre offset from the hip (m)."""

    l1: float = 0.44
    l2: float = 0.45
    l3: float = 0.17
    cx: float = 0.50
    cy: float = -0.40

    def __post_init__(self):
        for name in ("l1", "l2", "l3"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise DomainError(f"{name} must be a positive length, got {value!r}")
        for name in ("cx", "cy"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")

    def pedal_position(self, q3: float) -> tuple[float, float]:
        """Pedal position relative to the hip, via the crank."""
        return (self.l3 * math.cos(q3) + self.cx, self.l3 * math.sin(q3) + self.cy)

    def pedal_distance(self, q3: float) -> float:
        return math.hypot(*self.pedal_position(q3))


@dataclass(frozen=True)
class FullState:
    """Hip, knee and crank angles (rad) with their rates (rad/s)."""

    q1: float
    q2: float
    q3: float
    q1dot: float = 0.0
    q2dot: float = 0.0
    q3dot: float = 0.0

    @property
    def positions(self) -> np.ndarray:
        return np.array([self.q1, self.q2, self.q3])

    @property
    def velocities(self) -> np.ndarray:
        return np.array([self.q1dot, self.q2dot, self.q3dot])


@dataclass(frozen=True)
class CrankState:
    """Independent coordinate of the reduced system."""

    q: float
    qdot: float

    def __post_init__(self):
        if not (math.isfinite(self.q) and math.isfinite(self.qdot)):
            raise DomainError("crank state must be finite")


class ChainState(NamedTuple):
    """Everything the reduced dynamics needs from the kinematics at one instant."""

    q1: float
    q2: float
    mu1: float
    mu2: float
    mu1dot: float
    mu2dot: float


def check_reachability(geom: RiderGeometry, margin: float = 1e-3, samples: int = 3600) -> tuple[float, float]:
    """Verify the pedal stays strictly inside the leg's annulus of reach.

    Returns the (min, max) hip-to-pedal distance over the sampled cycle and
    raises :class:`DomainError` when either end comes within ``margin`` of
    full extension or full folding.
    """
    if margin <= 0.0:
        raise DomainError("reachability margin must be positive")
    q3 = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    d = np.hypot(geom.l3 * np.cos(q3) + geom.cx, geom.l3 * np.sin(q3) + geom.cy)
    # the extremes of |c + l3*r| are analytic: |c| -+ l3
    c = math.hypot(geom.cx, geom.cy)
    d_min = min(float(d.min()), abs(c - geom.l3))
    d_max = max(float(d.max()), c + geom.l3)
    lo = abs(geom.l1 - geom.l2) + margin
    hi = geom.l1 + geom.l2 - margin
    if not (lo < d_min and d_max < hi):
        raise DomainError(
            f"pedal distance range [{d_min:.4f}, {d_max:.4f}] m leaves the reachable "
            f"band ({lo:.4f}, {hi:.4f}) m"
        )
    return d_min, d_max


def _clamped_acos(x: float, what: str) -> float:
    if x > 1.0:
        if x - 1.0 > ACOS_TOL:
            raise DomainError(f"{what}: arc-cosine argument {x!r} > 1 (pedal out of reach)")
        x = 1.0
    elif x < -1.0:
        if -1.0 - x > ACOS_TOL:
            raise DomainError(f"{what}: arc-cosine argument {x!r} < -1 (pedal out of reach)")
        x = -1.0
    return math.acos(x)


def inverse_kinematics(geom: RiderGeometry, q3: float) -> tuple[float, float]:
    """Hip and knee angles that close the chain at crank angle ``q3``.

    The knee branch is the one with ``q2`` in ``(pi, 2*pi)``; the hip angle
    then follows from the law of cosines plus the direction of the pedal.
    """
    l1, l2 = geom.l1, geom.l2
    px = geom.l3 * math.cos(q3) + geom.cx
    py = geom.l3 * math.sin(q3) + geom.cy
    d2 = px * px + py * py
    d = math.sqrt(d2)
    if d == 0.0:
        raise DomainError("pedal coincides with the hip")
    q1 = _clamped_acos((l1 * l1 + d2 - l2 * l2) / (2.0 * l1 * d), "hip angle") + math.atan2(py, px)
    q2 = _clamped_acos((l1 * l1 + l2 * l2 - d2) / (2.0 * l1 * l2), "knee angle") + math.pi
    if not (math.pi < q1 + q2 < 2.0 * math.pi):
        raise DomainError(
            f"crank angle {q3:.6f} puts the shank at {q1 + q2:.6f} rad, outside (pi, 2*pi)"
        )
    return q1, q2


def constraint_residual(geom: RiderGeometry, q: Sequence[float]) -> np.ndarray:
    """Loop-closure residual (m) of the positions ``q = (q1, q2, q3)``."""
    q1, q2, q3 = (float(v) for v in q[:3])
    return np.array(
        [
            geom.l1 * math.cos(q1) + geom.l2 * math.cos(q1 + q2) - geom.l3 * math.cos(q3) - geom.cx,
            geom.l1 * math.sin(q1) + geom.l2 * math.sin(q1 + q2) - geom.l3 * math.sin(q3) - geom.cy,
        ]
    )


def forward_kinematics(geom: RiderGeometry, q1: float, q2: float) -> tuple[np.ndarray, np.ndarray]:
    """Knee and pedal positions reached through the leg (hip at origin)."""
    knee = np.array([geom.l1 * math.cos(q1), geom.l1 * math.sin(q1)])
    pedal = knee + geom.l2 * np.array([math.cos(q1 + q2), math.sin(q1 + q2)])
    return knee, pedal


def _check_knee(q2: float) -> float:
    s2 = math.sin(q2)
    if abs(s2) < SINGULAR_TOL:
        raise SingularityError(f"knee angle {q2:.6f} rad is singular (|sin q2| < {SINGULAR_TOL})")
    return s2


def jacobian(geom: RiderGeometry, q1: float, q2: float) -> np.ndarray:
    """Pedal-velocity Jacobian of the leg, ``d(pedal)/d(q1, q2)``."""
    _check_knee(q2)
    s1, c1 = math.sin(q1), math.cos(q1)
    s12, c12 = math.sin(q1 + q2), math.cos(q1 + q2)
    return np.array(
        [
            [-geom.l1 * s1 - geom.l2 * s12, -geom.l2 * s12],
            [geom.l1 * c1 + geom.l2 * c12, geom.l2 * c12],
        ]
    )


def psi_jacobian(geom: RiderGeometry, q: Sequence[float]) -> np.ndarray:
    """Jacobian of the stacked map (constraints, crank parameterization)."""
    q1, q2, q3 = (float(v) for v in q[:3])
    out = np.zeros((3, 3))
    out[:2, :2] = jacobian(geom, q1, q2)
    out[0, 2] = geom.l3 * math.sin(q3)
    out[1, 2] = -geom.l3 * math.cos(q3)
    out[2, 2] = 1.0
    return out


def chain_state(geom: RiderGeometry, q3: float, q3dot: float = 0.0) -> ChainState:
    """Solve the chain and its velocity map at ``(q3, q3dot)`` in one pass.

    ``mu`` maps the crank rate onto the hip and knee rates
    (``q1dot = mu1 * q3dot``); ``mudot`` is its time derivative along the
    constrained motion.
    """
    q1, q2 = inverse_kinematics(geom, q3)
    return _chain_from_angles(geom, q1, q2, q3, q3dot)


def _chain_from_angles(geom, q1, q2, q3, q3dot) -> ChainState:
    l1, l2, l3 = geom.l1, geom.l2, geom.l3
    s2 = _check_knee(q2)
    s1, c1 = math.sin(q1), math.cos(q1)
    s12, c12 = math.sin(q1 + q2), math.cos(q1 + q2)
    s3, c3 = math.sin(q3), math.cos(q3)
    j11, j12 = -l1 * s1 - l2 * s12, -l2 * s12
    j21, j22 = l1 * c1 + l2 * c12, l2 * c12
    det = l1 * l2 * s2
    # J @ mu12 = crank-point velocity per unit crank rate
    b1, b2 = -l3 * s3, l3 * c3
    mu1 = (b1 * j22 - b2 * j12) / det
    mu2 = (j11 * b2 - j21 * b1) / det
    # differentiate J @ mu12 = b along the motion: J @ mudot12 = bdot - Jdot @ mu12
    w1 = mu1 * q3dot
    w12 = (mu1 + mu2) * q3dot
    jd_mu1 = mu1 * (-l1 * c1 * w1 - l2 * c12 * w12) + mu2 * (-l2 * c12 * w12)
    jd_mu2 = mu1 * (-l1 * s1 * w1 - l2 * s12 * w12) + mu2 * (-l2 * s12 * w12)
    r1 = -l3 * c3 * q3dot - jd_mu1
    r2 = -l3 * s3 * q3dot - jd_mu2
    mu1dot = (r1 * j22 - r2 * j12) / det
    mu2dot = (j11 * r2 - j21 * r1) / det
    return ChainState(q1, q2, mu1, mu2, mu1dot, mu2dot)


def reduction_vector_mu(geom: RiderGeometry, q: Sequence[float]) -> np.ndarray:
    """Velocity map ``mu`` with ``qdot' = mu * q3dot``; its third entry is 1."""
    q1, q2, q3 = (float(v) for v in q[:3])
    cs = _chain_from_angles(geom, q1, q2, q3, 0.0)
    return np.array([cs.mu1, cs.mu2, 1.0])


def reduction_vector_mu_dot(geom: RiderGeometry, q: Sequence[float], q3dot: float) -> np.ndarray:
    """Time derivative of ``mu`` along the constrained motion at rate ``q3dot``."""
    q1, q2, q3 = (float(v) for v in q[:3])
    cs = _chain_from_angles(geom, q1, q2, q3, q3dot)
    return np.array([cs.mu1dot, cs.mu2dot, 0.0])
