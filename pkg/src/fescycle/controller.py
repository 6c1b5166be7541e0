"""Tracking errors, the RISE voltage law, reference trajectories and gain checks.

Errors are taken in the forward crank frame::

    e1 = q_d - q,   e2 = e1dot + alpha1*e1,   r = e2dot + alpha2*e2

and the control is ``u = (ks + 1)(e2 - e2(0)) + nu`` with
``nudot = (ks + 1) alpha2 e2 + beta sgn(e2)``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import ConfigError
from .geometry import CrankState

log = logging.getLogger(__name__)

RPM = 2.0 * math.pi / 60.0


@dataclass(frozen=True)
class Gains:
    alpha1: float = 5.0
    alpha2: float = 5.0
    ks: float = 10.0
    beta: float = 10.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (math.isfinite(value) and value > 0.0):
                raise ConfigError(f"gain {name} must be positive and finite, got {value!r}")


class TrackingErrors(NamedTuple):
    e1: float
    e2: float
    r: float


@dataclass(frozen=True)
class ControllerState:
    """RISE integrator ``nu`` together with the captured ``e2(0)``."""

    nu: float
    e2_initial: float
    t: float = 0.0
    saturations: int = 0


@dataclass(frozen=True)
class TrajectorySpec:
    """Desired crank motion.

    ``kind="constant"``: ``q_d = q0 + omega*t``.  ``kind="ramp"``: the cadence
    blends from 0 to ``omega`` over ``ramp_time`` seconds with the quintic
    smoothstep ``10s^3 - 15s^4 + 6s^5`` and is constant afterwards.
    """

    kind: str = "constant"
    cadence_rpm: float = 50.0
    q0: float = 0.0
    ramp_time: float = 2.0

    def __post_init__(self):
        if self.kind not in ("constant", "ramp"):
            raise ConfigError(f"trajectory kind must be 'constant' or 'ramp', got {self.kind!r}")
        if not all(math.isfinite(v) for v in (self.cadence_rpm, self.q0, self.ramp_time)):
            raise ConfigError("trajectory parameters must be finite")
        if self.kind == "ramp" and self.ramp_time <= 0.0:
            raise ConfigError("ramp_time must be positive")

    @property
    def omega(self) -> float:
        return self.cadence_rpm * RPM


class DesiredSample(NamedTuple):
    """``q_d`` and its first four time derivatives."""

    q: float
    qd1: float
    qd2: float
    qd3: float
    qd4: float


def desired_trajectory(spec: TrajectorySpec, t: float) -> DesiredSample:
    w = spec.omega
    if spec.kind == "constant":
        return DesiredSample(spec.q0 + w * t, w, 0.0, 0.0, 0.0)
    T = spec.ramp_time
    if t <= 0.0:
        return DesiredSample(spec.q0, 0.0, 0.0, 0.0, 0.0)
    if t >= T:
        return DesiredSample(spec.q0 + w * (t - 0.5 * T), w, 0.0, 0.0, 0.0)
    s = t / T
    s2, s3 = s * s, s * s * s
    return DesiredSample(
        spec.q0 + w * T * s2 * s2 * (2.5 - 3.0 * s + s2),
        w * s3 * (10.0 - 15.0 * s + 6.0 * s2),
        w * 30.0 * s2 * (1.0 - s) ** 2 / T,
        w * 60.0 * s * (1.0 - 3.0 * s + 2.0 * s2) / T**2,
        w * 60.0 * (1.0 - 6.0 * s + 6.0 * s2) / T**3,
    )


def desired_trajectory_array(spec: TrajectorySpec, t) -> np.ndarray:
    """Rows ``(q, qd1, qd2, qd3, qd4)`` for every time in ``t``; shape ``(5, n)``."""
    t = np.asarray(t, dtype=float)
    w = spec.omega
    if spec.kind == "constant":
        z = np.zeros_like(t)
        return np.stack([spec.q0 + w * t, np.full_like(t, w), z, z, z])
    T = spec.ramp_time
    s = np.clip(t / T, 0.0, 1.0)
    inside = (t > 0.0) & (t < T)
    q = np.where(t >= T, spec.q0 + w * (t - 0.5 * T), spec.q0 + w * T * s**4 * (2.5 - 3.0 * s + s * s))
    v = w * s**3 * (10.0 - 15.0 * s + 6.0 * s * s)
    a = np.where(inside, w * 30.0 * s * s * (1.0 - s) ** 2 / T, 0.0)
    j = np.where(inside, w * 60.0 * s * (1.0 - 3.0 * s + 2.0 * s * s) / T**2, 0.0)
    k = np.where(inside, w * 60.0 * (1.0 - 6.0 * s + 6.0 * s * s) / T**3, 0.0)
    return np.stack([q, v, a, j, k])


def compute_errors(
    desired: DesiredSample,
    crank: CrankState,
    gains: Gains,
    prev_e2: Optional[float] = None,
    dt: Optional[float] = None,
    qddot: Optional[float] = None,
) -> TrackingErrors:
    """Position, filtered and second filtered errors.

    ``r`` uses the model acceleration ``qddot`` when given, otherwise a
    backward difference of ``e2`` (needs ``prev_e2`` and ``dt``); with
    neither it is NaN.
    """
    if dt is not None and not dt > 0.0:
        raise ValueError("dt must be positive")
    e1 = desired.q - crank.q
    e1dot = desired.qd1 - crank.qdot
    e2 = e1dot + gains.alpha1 * e1
    if qddot is not None:
        e2dot = desired.qd2 - qddot + gains.alpha1 * e1dot
    elif prev_e2 is not None and dt is not None:
        e2dot = (e2 - prev_e2) / dt
    else:
        return TrackingErrors(e1, e2, math.nan)
    return TrackingErrors(e1, e2, e2dot + gains.alpha2 * e2)


def sgn(x: float) -> float:
    """Signum with ``sgn(0) = 0``."""
    return 1.0 if x > 0.0 else (-1.0 if x < 0.0 else 0.0)


def control_voltage(gains: Gains, e2: float, cs: ControllerState, u_max: float = math.inf) -> tuple[float, float]:
    """``(u, u_unsaturated)`` for the current integrator state."""
    raw = (gains.ks + 1.0) * (e2 - cs.e2_initial) + cs.nu
    return max(-u_max, min(u_max, raw)), raw


def nu_rate(gains: Gains, e2: float, boundary_layer: float = 0.0) -> float:
    """``nudot``; ``boundary_layer > 0`` replaces sgn by ``tanh(e2/eps)``."""
    s = math.tanh(e2 / boundary_layer) if boundary_layer > 0.0 else sgn(e2)
    return (gains.ks + 1.0) * gains.alpha2 * e2 + gains.beta * s


def advance_integrator(
    gains: Gains,
    cs: ControllerState,
    e2: float,
    dt: float,
    e2_next: Optional[float] = None,
    quadrature: str = "euler",
    boundary_layer: float = 0.0,
) -> ControllerState:
    """One step of ``nu``.

    ``"trapezoid"`` averages the linear term over the step (needs
    ``e2_next``); the sign term is always taken at the start of the step.
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    if quadrature == "trapezoid" and e2_next is not None:
        lin = (gains.ks + 1.0) * gains.alpha2 * 0.5 * (e2 + e2_next)
        sw = math.tanh(e2 / boundary_layer) if boundary_layer > 0.0 else sgn(e2)
        rate = lin + gains.beta * sw
    elif quadrature in ("euler", "trapezoid"):
        rate = nu_rate(gains, e2, boundary_layer)
    else:
        raise ConfigError(f"unknown quadrature {quadrature!r}")
    return replace(cs, nu=cs.nu + dt * rate, t=cs.t + dt)


def rise_control(
    gains: Gains,
    errors: TrackingErrors,
    cs: ControllerState,
    dt: float,
    u_max: float = 40.0,
    e2_next: Optional[float] = None,
    quadrature: str = "euler",
) -> tuple[float, ControllerState]:
    """Voltage for this step and the integrator state for the next one.

    The output is clipped to ``[-u_max, u_max]``; clipping is logged and
    counted in ``ControllerState.saturations``.
    """
    u, raw = control_voltage(gains, errors.e2, cs, u_max)
    nxt = advance_integrator(gains, cs, errors.e2, dt, e2_next, quadrature)
    if u != raw:
        log.warning("control saturated at t=%.6f s: requested %.3f V, limit %.1f V", cs.t, raw, u_max)
        nxt = replace(nxt, saturations=nxt.saturations + 1)
    return u, nxt


# -- gain conditions ----------------------------------------------------------


def q_matrix(alpha1: float, alpha2: float) -> np.ndarray:
    return np.array([[alpha1, -0.5, 0.0], [-0.5, alpha2, 0.0], [0.0, 0.0, 1.0]])


def lambda_min_q(alpha1: float, alpha2: float) -> float:
    """Smallest eigenvalue of ``Q`` in closed form."""
    mean = 0.5 * (alpha1 + alpha2)
    rad = math.hypot(0.5 * (alpha1 - alpha2), 0.5)
    return min(mean - rad, 1.0)


def polyval_increasing(coeffs: Sequence[float], s: float) -> float:
    """``sum c_k s^k``."""
    out = 0.0
    for c in reversed(tuple(coeffs)):
        out = out * s + c
    return out


@dataclass(frozen=True)
class GainBounds:
    """Model-dependent constants entering the sufficient conditions.

    ``rho`` holds increasing-power coefficients of a nondecreasing polynomial
    bound on ``|N_tilde| / |z|``; ``z0`` is the initial ``(e1, e2, r)`` and
    ``nd0`` the value of ``N_d`` at ``t = 0``.
    """

    zeta_nd: float
    zeta_nd_dot: float
    rho: tuple
    m_omega_min: float
    m_omega_max: float
    z0: tuple = (0.0, 0.0, 0.0)
    nd0: float = 0.0

    def rho_at(self, s: float) -> float:
        return polyval_increasing(self.rho, s)


@dataclass(frozen=True)
class Condition:
    value: float
    threshold: float
    passed: bool


@dataclass(frozen=True)
class GainReport:
    alpha_product: Condition
    beta: Condition
    ks: Condition
    lambda_min_q: float
    lambda1: float
    lambda2: float
    region_of_attraction: dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return self.alpha_product.passed and self.beta.passed and self.ks.passed

    def failed(self) -> list:
        return [n for n in ("alpha_product", "beta", "ks") if not getattr(self, n).passed]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["all_passed"] = self.all_passed
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(json_safe(self.to_dict()), allow_nan=False, **kw)


def json_safe(obj):
    """Recursively turn numpy scalars into Python ones and non-finite floats into strings."""
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _solve_rho_radius(coeffs, target: float) -> float:
    """Largest ``s >= 0`` with ``rho(s) < target`` (``inf`` if rho never reaches it)."""
    if polyval_increasing(coeffs, 0.0) >= target:
        return 0.0
    if all(c == 0.0 for c in tuple(coeffs)[1:]):
        return math.inf
    hi = 1.0
    while polyval_increasing(coeffs, hi) < target:
        hi *= 2.0
        if hi > 1e12:
            return math.inf
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if polyval_increasing(coeffs, mid) < target:
            lo = mid
        else:
            hi = mid
    return lo


def check_gains(gains: Gains, bounds: GainBounds) -> GainReport:
    """Evaluate the three sufficient gain conditions and the attraction region.

    All comparisons are strict, so a gain sitting exactly on its threshold
    fails.
    """
    a1, a2 = gains.alpha1, gains.alpha2
    lam_q = lambda_min_q(a1, a2)
    prod = a1 * a2
    c_alpha = Condition(prod, 0.25, prod > 0.25)
    beta_thr = bounds.zeta_nd + bounds.zeta_nd_dot / a2
    c_beta = Condition(gains.beta, beta_thr, gains.beta > beta_thr)
    z0n = math.sqrt(sum(v * v for v in bounds.z0))
    rho0 = bounds.rho_at(z0n)
    ks_thr = rho0 * rho0 / (4.0 * lam_q) if lam_q > 0.0 else math.inf
    c_ks = Condition(gains.ks, ks_thr, gains.ks > ks_thr)

    lam1 = 0.5 * min(1.0, bounds.m_omega_min)
    lam2 = max(0.5 * bounds.m_omega_max, 1.0)
    e20 = bounds.z0[1]
    p0 = gains.beta * abs(e20) - e20 * bounds.nd0
    y0 = math.sqrt(z0n * z0n + max(p0, 0.0))
    scale = math.sqrt(lam2 / lam1)
    rhs = 2.0 * math.sqrt(lam_q * gains.ks) if lam_q > 0.0 else 0.0
    lhs = bounds.rho_at(scale * y0)
    radius = _solve_rho_radius(bounds.rho, rhs) / scale if rhs > 0.0 else 0.0
    roa = {
        "rho_at_scaled_y0": lhs,
        "bound": rhs,
        "y0_norm": y0,
        "P0": p0,
        "radius": radius,
        "contains_initial_state": bool(lhs < rhs),
    }
    return GainReport(c_alpha, c_beta, c_ks, lam_q, lam1, lam2, roa)
