"""Fixed-step closed-loop simulation and Lyapunov bookkeeping.

The plant state is the forward-frame crank angle and rate; hip and knee
angles are regenerated from the loop-closure equations at every evaluation,
so there is no constraint drift to manage.

Controller timing (``SimConfig.control``):

``"continuous"`` (default)
    ``nu`` is integrated together with the plant, so ``sgn(e2)`` is sampled
    at the stage states;
``"staged"``
    the proportional part ``(ks+1)(e2 - e2(0))`` is evaluated at every
    integrator stage, the integrator ``nu`` is held over the step and then
    advanced by its quadrature;
``"zoh"``
    the whole voltage is sampled at the step start and held, as on a
    stimulator.

``quadrature`` only matters for the two sampled modes.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np

from .bounds import desired_nd
from .controller import Gains, TrajectorySpec, desired_trajectory, json_safe, q_matrix
from .dynamics import crank_terms
from .errors import FesCycleError
from .model import CycleRider
from .muscles import GROUPS
from .scheduler import PAIRS

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    duration: float = 60.0
    integrator: str = "rk4"
    control: str = "continuous"
    quadrature: str = "trapezoid"
    q0: Optional[float] = None
    qdot0: Optional[float] = None
    e1_0: float = 0.05
    nu0: Union[float, str] = "auto"
    u_max: float = 40.0
    boundary_layer: float = 0.0
    gains: Gains = field(default_factory=Gains)
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)

    def __post_init__(self):
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive")
        if not self.duration >= self.dt:
            raise ValueError("duration must be at least one step")
        if self.integrator not in ("rk4", "euler"):
            raise ValueError(f"integrator must be 'rk4' or 'euler', got {self.integrator!r}")
        if self.control not in ("staged", "zoh", "continuous"):
            raise ValueError(f"unknown control timing {self.control!r}")
        if self.quadrature not in ("euler", "trapezoid"):
            raise ValueError(f"unknown quadrature {self.quadrature!r}")
        if isinstance(self.nu0, str) and self.nu0 != "auto":
            raise ValueError("nu0 must be a number or 'auto'")
        if not self.u_max > 0.0:
            raise ValueError("u_max must be positive")
        if self.boundary_layer < 0.0:
            raise ValueError("boundary_layer must be >= 0")

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))

    def initial_state(self) -> tuple[float, float]:
        """Forward-frame ``(q, qdot)`` at ``t = 0``."""
        des = desired_trajectory(self.trajectory, 0.0)
        q = des.q - self.e1_0 if self.q0 is None else self.q0
        qdot = des.qd1 if self.qdot0 is None else self.qdot0
        return q, qdot


TRACE_FIELDS = (
    "t", "q3", "q3dot", "q1", "q2", "q_d", "e1", "e2", "r", "u", "nu",
    "chi_Glut", "chi_Ham", "chi_Gast", "chi_Quad", "pair", "omega_chi", "m_omega",
    "force_x", "force_y", "tangency", "constraint", "d", "N_d", "P", "V", "saturated", "switch",
)


class SimTrace:
    """Column store of a run; one row per step including ``t = 0``."""

    def __init__(self, n: int):
        self.n = n
        self.data = {name: np.zeros(n) for name in TRACE_FIELDS}
        self.data["pair"] = np.zeros(n, dtype=int)
        self.data["saturated"] = np.zeros(n, dtype=bool)
        self.data["switch"] = np.zeros(n, dtype=bool)
        self.meta: dict = {}

    def __getitem__(self, name):
        return self.data[name]

    def __len__(self):
        return self.n

    def pair_labels(self) -> list:
        return [f"{PAIRS[k][0].value}-{PAIRS[k][1].value}" for k in self.data["pair"]]

    def to_csv(self, path) -> None:
        labels = self.pair_labels()
        cols = [self.data[name] for name in TRACE_FIELDS]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_FIELDS)
            for i in range(self.n):
                row = []
                for name, col in zip(TRACE_FIELDS, cols):
                    v = col[i]
                    if name == "pair":
                        row.append(labels[i])
                    elif col.dtype == bool:
                        row.append(int(v))
                    else:
                        row.append(repr(float(v)))
                w.writerow(row)


@dataclass
class LyapunovDiagnostics:
    V: np.ndarray
    P: np.ndarray
    N_d: np.ndarray
    dV: np.ndarray
    Q: np.ndarray
    lambda1: float
    lambda2: float
    m_omega_min: float
    m_omega_max: float
    min_P: float
    dV_tol: float
    dV_max: float
    dV_violations: int
    dV_flagged: int
    sandwich_violations: int
    first_violations: list

    def summary(self) -> dict:
        return {
            "min_P": self.min_P,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "lambda_min_Q": float(np.linalg.eigvalsh(self.Q)[0]),
            "m_omega_min": self.m_omega_min,
            "m_omega_max": self.m_omega_max,
            "dV_tol": self.dV_tol,
            "dV_max_outside_switches": self.dV_max,
            "dV_violations": self.dV_violations,
            "dV_flagged_at_switch_or_saturation": self.dV_flagged,
            "sandwich_violations": self.sandwich_violations,
            "first_violation_steps": self.first_violations,
        }


def closed_loop_rhs(model: CycleRider, t: float, q: float, qdot: float, u: float, prev_pair: Optional[int] = None):
    """``(qdot, qddot)`` of the forward-frame crank under voltage ``u``."""
    p = model.point(t, q, qdot, prev_pair)
    return qdot, model.accel(p, u)


def free_response(model: CycleRider, q3: float, q3dot: float, dt: float, duration: float,
                  with_disturbance: bool = False) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unactuated (``u = 0``) RK4 response of the reduced crank equation.

    Works in the crank frame and skips the muscle model entirely.  Returns
    ``(t, q3, q3dot)`` sampled every step.
    """
    body, geo, pas = model.body, model.geometry, model.passive
    sense = model.sense
    n = int(round(duration / dt))

    def acc(t, q, v):
        ct = crank_terms(body, geo, pas, q, v)
        d = sense * model.disturbance_at(t) if with_disturbance else 0.0
        return -(ct.C * v + ct.g - ct.Me - ct.Mv + d) / ct.M

    ts = np.arange(n + 1) * dt
    qs = np.empty(n + 1)
    vs = np.empty(n + 1)
    q, v = q3, q3dot
    qs[0], vs[0] = q, v
    h2 = 0.5 * dt
    for k in range(n):
        t = k * dt
        a1 = acc(t, q, v)
        v2 = v + h2 * a1
        a2 = acc(t + h2, q + h2 * v, v2)
        v3 = v + h2 * a2
        a3 = acc(t + h2, q + h2 * v2, v3)
        v4 = v + dt * a3
        a4 = acc(t + dt, q + dt * v3, v4)
        q += dt / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4)
        v += dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        qs[k + 1], vs[k + 1] = q, v
    return ts, qs, vs


def _auto_nu0(model: CycleRider, cfg: SimConfig, q: float, qdot: float) -> float:
    """``nu(0)`` equal to the voltage that makes ``r(0) = 0``."""
    g = cfg.gains
    des = desired_trajectory(cfg.trajectory, 0.0)
    e1 = des.q - q
    e1dot = des.qd1 - qdot
    e2 = e1dot + g.alpha1 * e1
    a_ref = des.qd2 + g.alpha1 * e1dot + g.alpha2 * e2
    return model.phi(model.point(0.0, q, qdot), a_ref)


def initial_errors(model: CycleRider, cfg: SimConfig) -> tuple[float, float, float]:
    """``z(0) = (e1, e2, r)`` implied by the initial state and ``nu(0)``."""
    g = cfg.gains
    q, qdot = cfg.initial_state()
    des = desired_trajectory(cfg.trajectory, 0.0)
    e1 = des.q - q
    e1dot = des.qd1 - qdot
    e2 = e1dot + g.alpha1 * e1
    if cfg.nu0 == "auto":
        return e1, e2, 0.0
    u = min(max(float(cfg.nu0), -cfg.u_max), cfg.u_max)
    qdd = model.accel(model.point(0.0, q, qdot), u)
    return e1, e2, des.qd2 - qdd + g.alpha1 * e1dot + g.alpha2 * e2


def run(model: CycleRider, cfg: SimConfig, diagnostics: bool = True, report=None) -> SimTrace:
    """Integrate the closed loop for ``cfg.duration`` seconds.

    ``report`` is the :class:`~fescycle.controller.GainReport` for ``cfg.gains``;
    failed conditions are logged and the run continues.  Model errors
    (no feasible pair, singular pose, ...) propagate with the failing time
    stamp attached.
    """
    if report is not None and not report.all_passed:
        log.warning("gain conditions failed (%s); the stability certificate does not apply",
                    ", ".join(report.failed()))
    t_fail = [0.0]
    try:
        return _run(model, cfg, diagnostics, t_fail)
    except FesCycleError as exc:
        if getattr(exc, "t", None) is None:
            exc.t = t_fail[0]
            exc.args = (f"{exc} (t = {t_fail[0]:.6f} s)",)
        raise


def _run(model: CycleRider, cfg: SimConfig, diagnostics: bool, t_fail: list) -> SimTrace:
    g = cfg.gains
    a1, a2, kp, beta = g.alpha1, g.alpha2, g.ks + 1.0, g.beta
    dt, n = cfg.dt, cfg.steps
    traj = cfg.trajectory
    w = traj.omega
    umax = cfg.u_max
    bl = cfg.boundary_layer
    zoh, cont = cfg.control == "zoh", cfg.control == "continuous"
    rk4 = cfg.integrator == "rk4"
    trap = cfg.quadrature == "trapezoid"
    kernel = model.point
    sense = model.sense
    constant = traj.kind == "constant"
    q0d = traj.q0

    def des(t):
        if constant:
            return q0d + w * t, w, 0.0
        d = desired_trajectory(traj, t)
        return d.q, d.qd1, d.qd2

    def swfun(e2):
        if bl > 0.0:
            return math.tanh(e2 / bl)
        return 1.0 if e2 > 0.0 else (-1.0 if e2 < 0.0 else 0.0)

    q, qdot = cfg.initial_state()
    qd, vd, _ = des(0.0)
    e2_0 = (vd - qdot) + a1 * (qd - q)
    nu = _auto_nu0(model, cfg, q, qdot) if cfg.nu0 == "auto" else float(cfg.nu0)

    tr = SimTrace(n + 1)
    D = tr.data
    col = {k: D[k] for k in TRACE_FIELDS}
    chi_cols = [D["chi_" + gname.value] for gname in GROUPS]
    group_pos = {gid: k for k, gid in enumerate(GROUPS)}
    pair_cols = [(group_pos[a], group_pos[b]) for a, b in PAIRS]
    prev_pair = None
    sat_count = 0

    def voltage(t, qq, vv, nu_now):
        qd_, vd_, _ = des(t)
        e2 = (vd_ - vv) + a1 * (qd_ - qq)
        raw = kp * (e2 - e2_0) + nu_now
        return (umax if raw > umax else (-umax if raw < -umax else raw)), raw, e2

    for k in range(n + 1):
        t = k * dt
        t_fail[0] = t
        p = kernel(t, q, qdot, prev_pair)
        qd, vd, ad = des(t)
        e1 = qd - q
        e1dot = vd - qdot
        e2 = e1dot + a1 * e1
        raw = kp * (e2 - e2_0) + nu
        u = umax if raw > umax else (-umax if raw < -umax else raw)
        sat = u != raw
        qdd = (p.omega_chi * u - p.d - sense * p.h) / p.M
        r = (ad - qdd + a1 * e1dot) + a2 * e2

        col["t"][k] = t
        col["q3"][k] = p.q3
        col["q3dot"][k] = sense * qdot
        col["q1"][k] = p.q1
        col["q2"][k] = p.q2
        col["q_d"][k] = qd
        col["e1"][k] = e1
        col["e2"][k] = e2
        col["r"][k] = r
        col["u"][k] = u
        col["nu"][k] = nu
        ia, ib = pair_cols[p.pair]
        chi_cols[ia][k] = p.chi
        chi_cols[ib][k] = 1.0 - p.chi
        col["pair"][k] = p.pair
        col["omega_chi"][k] = p.omega_chi
        col["m_omega"][k] = p.M / p.omega_chi
        col["force_x"][k] = p.fx
        col["force_y"][k] = p.fy
        c3, s3 = math.cos(p.q3), math.sin(p.q3)
        col["tangency"][k] = abs(p.fx * c3 + p.fy * s3) / math.hypot(p.fx, p.fy)
        col["d"][k] = p.d
        col["switch"][k] = prev_pair is not None and p.pair != prev_pair
        prev_pair = p.pair
        if k == n:
            col["saturated"][k] = sat
            sat_count += sat
            break

        # -- one integration step --------------------------------------------
        h2 = 0.5 * dt
        if cont:
            def f(tt, qq, vv, nn, first=False):
                pp_ = p if first else kernel(tt, qq, vv, prev_pair)
                uu, rr, ee = voltage(tt, qq, vv, nn)
                nd_ = kp * a2 * ee + beta * swfun(ee)
                return vv, (pp_.omega_chi * uu - pp_.d - sense * pp_.h) / pp_.M, nd_, uu != rr

            if rk4:
                k1 = f(t, q, qdot, nu, True)
                k2 = f(t + h2, q + h2 * k1[0], qdot + h2 * k1[1], nu + h2 * k1[2])
                k3 = f(t + h2, q + h2 * k2[0], qdot + h2 * k2[1], nu + h2 * k2[2])
                k4 = f(t + dt, q + dt * k3[0], qdot + dt * k3[1], nu + dt * k3[2])
                sat = sat or k2[3] or k3[3] or k4[3] or k1[3]
                q += dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
                qdot += dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
                nu += dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
            else:
                k1 = f(t, q, qdot, nu, True)
                sat = sat or k1[3]
                q, qdot, nu = q + dt * k1[0], qdot + dt * k1[1], nu + dt * k1[2]
        else:
            nu_k = nu

            def f(tt, qq, vv):
                pp_ = kernel(tt, qq, vv, prev_pair)
                if zoh:
                    uu, rr = u, raw
                else:
                    uu, rr, _ = voltage(tt, qq, vv, nu_k)
                return vv, (pp_.omega_chi * uu - pp_.d - sense * pp_.h) / pp_.M, uu != rr

            if rk4:
                k1 = (qdot, qdd, sat)
                k2 = f(t + h2, q + h2 * k1[0], qdot + h2 * k1[1])
                k3 = f(t + h2, q + h2 * k2[0], qdot + h2 * k2[1])
                k4 = f(t + dt, q + dt * k3[0], qdot + dt * k3[1])
                sat = sat or k2[2] or k3[2] or k4[2]
                q_new = q + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
                qdot_new = qdot + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
            else:
                q_new, qdot_new = q + dt * qdot, qdot + dt * qdd
            qd1, vd1, _ = des(t + dt)
            e2_next = (vd1 - qdot_new) + a1 * (qd1 - q_new)
            lin = 0.5 * (e2 + e2_next) if trap else e2
            nu = nu + dt * (kp * a2 * lin + beta * swfun(e2))
            q, qdot = q_new, qdot_new
        col["saturated"][k] = sat
        sat_count += sat

    if sat_count:
        log.warning("control saturated at %d of %d steps; the Lyapunov certificate does not cover them",
                    sat_count, n + 1)
    tr.meta = {"saturation_steps": int(sat_count), "switches": int(D["switch"].sum()),
               "e2_initial": e2_0, "nu0": float(D["nu"][0]), "config": _config_dict(cfg)}
    D["constraint"][:] = _constraint_residuals(model, D)
    if diagnostics:
        diag = lyapunov_diagnostics(tr, model, cfg)
        tr.meta["lyapunov"] = diag.summary()
    return tr


def _constraint_residuals(model: CycleRider, D) -> np.ndarray:
    geo = model.geometry
    q1, q2, q3 = D["q1"], D["q2"], D["q3"]
    rx = geo.l1 * np.cos(q1) + geo.l2 * np.cos(q1 + q2) - geo.l3 * np.cos(q3) - geo.cx
    ry = geo.l1 * np.sin(q1) + geo.l2 * np.sin(q1 + q2) - geo.l3 * np.sin(q3) - geo.cy
    return np.hypot(rx, ry)


def _config_dict(cfg: SimConfig) -> dict:
    return asdict(cfg)


def integrate_p(t, e2, nd, beta: float, alpha2: float, p0: float) -> np.ndarray:
    """``P(t)`` from ``Pdot = -r (N_d - beta sgn(e2))`` on the sample grid.

    With ``r = e2dot + alpha2 e2`` the ``e2dot`` part is a total derivative:
    ``beta sgn(e2) e2dot = beta d|e2|/dt`` is integrated exactly and
    ``-N_d e2dot`` by the midpoint value of ``N_d``; the ``alpha2`` part is
    integrated with the trapezoid rule.  This keeps the sign switches of
    ``e2`` from injecting O(1) quadrature errors.
    """
    t, e2, nd = (np.asarray(a, dtype=float) for a in (t, e2, nd))
    dt = np.diff(t)
    exact = beta * np.diff(np.abs(e2)) - np.diff(e2) * 0.5 * (nd[1:] + nd[:-1])
    g = alpha2 * (beta * np.abs(e2) - e2 * nd)
    trap = 0.5 * dt * (g[1:] + g[:-1])
    return p0 + np.concatenate([[0.0], np.cumsum(exact + trap)])


def lyapunov_diagnostics(
    trace: SimTrace,
    model: CycleRider,
    cfg: SimConfig,
    m_omega_bounds: Optional[tuple] = None,
    dv_tol: float = 1e-6,
) -> LyapunovDiagnostics:
    """``V``, ``P`` and the checks built on them; writes ``N_d, P, V`` into the trace."""
    g = cfg.gains
    D = trace.data
    t = D["t"]
    _, nd, _, _ = desired_nd(model, cfg.trajectory, t)
    e1, e2, r, m_om = D["e1"], D["e2"], D["r"], D["m_omega"]
    p0 = g.beta * abs(e2[0]) - e2[0] * nd[0]
    P = integrate_p(t, e2, nd, g.beta, g.alpha2, p0)
    V = 0.5 * m_om * r * r + 0.5 * e1 * e1 + 0.5 * e2 * e2 + P
    lo, hi = float(m_om.min()), float(m_om.max())
    if m_omega_bounds is not None:
        lo, hi = min(lo, m_omega_bounds[0]), max(hi, m_omega_bounds[1])
    lam1 = 0.5 * min(1.0, lo)
    lam2 = max(0.5 * hi, 1.0)
    y2 = e1 * e1 + e2 * e2 + r * r + np.maximum(P, 0.0)
    # relative slack for roundoff in V itself
    slack = 1e-12 * (1.0 + np.abs(V))
    sandwich = (lam1 * y2 > V + slack) | (V > lam2 * y2 + slack) | (P < 0.0)
    dV = np.diff(V)
    flagged = D["switch"][1:] | D["saturated"][:-1] | D["saturated"][1:]
    bad = (dV > dv_tol) & ~flagged
    D["N_d"][:] = nd
    D["P"][:] = P
    D["V"][:] = V
    idx = np.nonzero(bad)[0]
    free = dV[~flagged]
    return LyapunovDiagnostics(
        V=V, P=P, N_d=nd, dV=dV, Q=q_matrix(g.alpha1, g.alpha2),
        lambda1=lam1, lambda2=lam2, m_omega_min=lo, m_omega_max=hi,
        min_P=float(P.min()), dV_tol=dv_tol,
        dV_max=float(free.max()) if free.size else 0.0,
        dV_violations=int(bad.sum()), dV_flagged=int((flagged & (dV > dv_tol)).sum()),
        sandwich_violations=int(sandwich.sum()), first_violations=[int(i) for i in idx[:10]],
    )


def summary(trace: SimTrace, settle_time: float = 20.0) -> dict:
    """Headline numbers for ``summary.json``."""
    D = trace.data
    t, e1 = D["t"], D["e1"]
    late = t >= settle_time
    out = {
        "steps": len(trace),
        "final_time": float(t[-1]),
        "final_e1": float(e1[-1]),
        "final_e2": float(D["e2"][-1]),
        "max_abs_e1": float(np.abs(e1).max()),
        "max_abs_e1_after_settle": float(np.abs(e1[late]).max()) if late.any() else None,
        "settle_time": settle_time,
        "max_abs_u": float(np.abs(D["u"]).max()),
        "saturation_steps": int(D["saturated"].sum()),
        "switch_count": int(D["switch"].sum()),
        "max_tangency_residual": float(D["tangency"].max()),
        "max_constraint_residual": float(D["constraint"].max()),
        "min_P": float(D["P"].min()),
    }
    if "lyapunov" in trace.meta:
        out["lyapunov"] = trace.meta["lyapunov"]
    return out


def write_summary(trace: SimTrace, path, settle_time: float = 20.0) -> dict:
    s = summary(trace, settle_time)
    with open(path, "w") as fh:
        json.dump(json_safe(s), fh, indent=2, allow_nan=False)
    return s

