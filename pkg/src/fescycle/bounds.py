"""Numerical estimates of the constants behind the gain conditions.

Write ``Phi(t, q, qdot, a)`` for the voltage that produces forward crank
acceleration ``a`` at state ``(q, qdot)``.  Along the closed loop
``M_Omega r = Phi(t, q, qdot, qddot_ref) - u`` where
``qddot_ref = qdd_d + alpha1 e1dot + alpha2 e2``, and

    N     = dPhi/dt + e2 - 0.5 dM_Omega/dt r
    N_d   = N at z = 0  =  dS_d/dt,   S_d(t) = Phi(t, q_d, qd_d, qdd_d)
    N~    = N - N_d  with  |N~| <= rho(|z|) |z|

Time derivatives are finite differences taken along the motion.  The
activation schedule switches pairs at isolated angles, where ``Omega_chi``
has a corner; stencils that straddle a switch are replaced by one-sided
ones, so the reported values are one-sided limits there.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .controller import GainBounds, Gains, TrajectorySpec, desired_trajectory_array, json_safe
from .model import CycleRider

#: time step (s) of the difference stencils for S_d
SD_STEP = 2e-4
#: time step (s) of the directional stencil for N(t, z)
N_STEP = 1e-6

_OFFS = np.arange(-4, 5)

# 4th-order central, and 4th-order one-sided, first-derivative weights
_D1_C = np.array([0, 0, 1, -8, 0, 8, -1, 0, 0]) / 12.0
_D1_F = np.array([0, 0, 0, 0, -25, 48, -36, 16, -3]) / 12.0
# second derivative: 4th-order central, 3rd-order one-sided
_D2_C = np.array([0, 0, -1, 16, -30, 16, -1, 0, 0]) / 12.0
_D2_F = np.array([0, 0, 0, 0, 35, -104, 114, -56, 11]) / 12.0


def _stencil_derivative(values: np.ndarray, pairs: np.ndarray, h: float, order: int) -> np.ndarray:
    """Derivative from 9-point samples (axis 0) with switch-aware stencils.

    ``pairs`` holds the active pair at each stencil point; a stencil is only
    used if every point it touches shares the pair of the centre.
    """
    wc, wf = (_D1_C, _D1_F) if order == 1 else (_D2_C, _D2_F)
    hp = h**order
    same = pairs == pairs[4]
    central = same[2:7].all(axis=0)
    fwd = same[4:9].all(axis=0)
    bwd = same[0:5].all(axis=0)
    dc = np.tensordot(wc, values, axes=1) / hp
    df = np.tensordot(wf, values, axes=1) / hp
    wb = wf[::-1] * (1.0 if order == 2 else -1.0)
    db = np.tensordot(wb, values, axes=1) / hp
    out = np.where(central, dc, np.where(fwd, df, np.where(bwd, db, np.nan)))
    if order == 1:
        # last resort: two-point difference on whichever side is smooth
        f1 = (values[5] - values[4]) / h
        b1 = (values[4] - values[3]) / h
        out = np.where(np.isnan(out) & same[5], f1, np.where(np.isnan(out) & same[3], b1, out))
    return out


def desired_feedforward(model: CycleRider, traj: TrajectorySpec, t) -> np.ndarray:
    """``S_d(t)``: the voltage that makes the crank follow ``q_d`` exactly."""
    t = np.asarray(t, dtype=float)
    q, v, a, _, _ = desired_trajectory_array(traj, t)
    phi, _, _ = model.phi_batch(t, q, v, a)
    return phi


def desired_nd(model: CycleRider, traj: TrajectorySpec, t, h: float = SD_STEP) -> tuple:
    """``(S_d, N_d, dN_d/dt, pair)`` at the times ``t`` (1-D)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    tt = t[None, :] + h * _OFFS[:, None]
    q, v, a, _, _ = desired_trajectory_array(traj, tt.ravel())
    phi, _, b = model.phi_batch(tt.ravel(), q, v, a)
    phi = phi.reshape(tt.shape)
    pairs = b["pair"].reshape(tt.shape)
    n_d = _stencil_derivative(phi, pairs, h, 1)
    n_d_dot = _stencil_derivative(phi, pairs, h, 2)
    return phi[4], n_d, n_d_dot, pairs[4]


def state_from_errors(traj: TrajectorySpec, gains: Gains, t, z) -> tuple:
    """Crank state and reference signals reconstructed from ``z = (e1, e2, r)``.

    Returns ``(q, qdot, qddot, a_ref, a_ref_dot)`` where ``a_ref`` is
    ``qdd_d + alpha1 e1dot + alpha2 e2``.
    """
    e1, e2, r = (np.asarray(c, dtype=float) for c in z)
    qd, vd, ad, jd, _ = desired_trajectory_array(traj, t)
    a1, a2 = gains.alpha1, gains.alpha2
    e1d = e2 - a1 * e1
    e1dd = r - a1 * e1d - a2 * e2
    e2d = r - a2 * e2
    q = qd - e1
    qdot = vd - e1d
    qddot = ad - e1dd
    a_ref = ad + a1 * e1d + a2 * e2
    a_ref_dot = jd + a1 * e1dd + a2 * e2d
    return q, qdot, qddot, a_ref, a_ref_dot


def n_total(model: CycleRider, traj: TrajectorySpec, gains: Gains, t, z, h: float = N_STEP, with_pair: bool = False):
    """``N(t, z)`` for arrays ``t`` (n,) and ``z`` (3, n).

    With ``with_pair`` also returns the active pair at each state.
    """
    t = np.asarray(t, dtype=float)
    q, qdot, qddot, a_ref, a_ref_dot = state_from_errors(traj, gains, t, z)
    k = h * _OFFS[:, None]
    tt = t[None, :] + k
    qq = q[None, :] + k * qdot[None, :]
    vv = qdot[None, :] + k * qddot[None, :]
    aa = a_ref[None, :] + k * a_ref_dot[None, :]
    phi, m_om, b = model.phi_batch(tt.ravel(), qq.ravel(), vv.ravel(), aa.ravel())
    shape = tt.shape
    pairs = b["pair"].reshape(shape)
    dphi = _stencil_derivative(phi.reshape(shape), pairs, h, 1)
    dm = _stencil_derivative(m_om.reshape(shape), pairs, h, 1)
    e2, r = np.asarray(z[1], dtype=float), np.asarray(z[2], dtype=float)
    n = dphi + e2 - 0.5 * dm * r
    return (n, pairs[4]) if with_pair else n


@dataclass(frozen=True)
class BoundsBudget:
    """Sampling budget; everything random derives from ``seed``."""

    t_window: float = 10.0
    nd_step: float = 1e-3
    rho_times: int = 120
    rho_directions: int = 24
    rho_radii: tuple = (0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 0.6, 1.0, 2.0, 4.0)
    rho_degree: int = 2
    m_omega_cadence_margin: float = 3.0
    m_omega_angles: int = 720
    seed: int = 0


@dataclass
class BoundsEstimate:
    zeta_nd: float
    zeta_nd_dot: float
    nd_sampled_max: float
    nd_dot_sampled_max: float
    rho_radii: list
    rho_envelope: list
    rho_coeffs: list
    m_omega_min: float
    m_omega_max: float
    nd0: float
    kinks: int
    rho_excluded: int = 0
    budget: dict = field(default_factory=dict)

    def gain_bounds(self, z0=(0.0, 0.0, 0.0)) -> GainBounds:
        return GainBounds(
            zeta_nd=self.zeta_nd,
            zeta_nd_dot=self.zeta_nd_dot,
            rho=tuple(self.rho_coeffs),
            m_omega_min=self.m_omega_min,
            m_omega_max=self.m_omega_max,
            z0=tuple(float(v) for v in z0),
            nd0=self.nd0,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(json_safe(self.to_dict()), allow_nan=False, **kw)


def _sup_with_margin(values: np.ndarray, pairs: np.ndarray) -> tuple[float, float]:
    """Sampled max of ``|values|`` and a bound valid between the samples.

    Between two samples in the same smooth segment ``|f|`` can exceed the
    larger endpoint by at most about half their difference (plus curvature
    terms of higher order in the spacing); the margin uses the largest such
    jump in the grid.
    """
    a = np.abs(values)
    sampled = float(np.nanmax(a))
    same = pairs[1:] == pairs[:-1]
    jumps = np.abs(np.diff(values))[same]
    margin = float(np.nanmax(jumps)) if jumps.size else 0.0
    return sampled, sampled + 0.5 * margin


def _switch_limits(model, traj, t, pairs, h=SD_STEP) -> list:
    """One-sided ``N_d`` and ``dN_d/dt`` values at each schedule switch in ``t``."""
    out = []
    idx = np.nonzero(pairs[1:] != pairs[:-1])[0]
    for i in idx:
        lo, hi = float(t[i]), float(t[i + 1])
        plo = pairs[i]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if desired_nd(model, traj, [mid], h)[3][0] == plo:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-9:
                break
        # stencils here are one-sided by construction
        for tk in (lo - 1e-7, hi + 1e-7):
            _, nd, ndd, _ = desired_nd(model, traj, [tk], h)
            out.append((float(nd[0]), float(ndd[0])))
    return out


def _fit_rho(radii: np.ndarray, env: np.ndarray, degree: int) -> np.ndarray:
    """Nonnegative-coefficient polynomial lying above the envelope points.

    Nonnegative coefficients make the polynomial nondecreasing on s >= 0.
    The fit minimizes the summed polynomial values at the radii.
    """
    powers = radii[:, None] ** np.arange(degree + 1)[None, :]
    # p(s_j) >= env_j   <=>   -powers @ c <= -env
    res = linprog(
        c=powers.sum(axis=0),
        A_ub=-powers,
        b_ub=-env,
        bounds=[(0.0, None)] * (degree + 1),
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"rho fit failed: {res.message}")
    coeffs = res.x
    # guard against solver tolerance leaving a point a hair under the envelope
    short = np.max(env - powers @ coeffs)
    if short > 0.0:
        coeffs = coeffs.copy()
        coeffs[0] += short
    return coeffs


def m_omega_range(model: CycleRider, traj: TrajectorySpec, budget: BoundsBudget) -> tuple[float, float]:
    """Min/max of ``M / Omega_chi`` over a crank-angle by cadence grid."""
    w = traj.omega
    cad = np.linspace(min(0.0, w) - budget.m_omega_cadence_margin, max(0.0, w) + budget.m_omega_cadence_margin, 25)
    q = np.linspace(0.0, 2.0 * np.pi, budget.m_omega_angles, endpoint=False)
    qq, cc = np.meshgrid(q, cad)
    b = model.batch(0.0, qq.ravel(), cc.ravel())
    m_om = b["M"] / b["omega_chi"]
    return float(m_om.min()), float(m_om.max())


def estimate_bounds(
    model: CycleRider,
    traj: TrajectorySpec,
    gains: Gains,
    budget: Optional[BoundsBudget] = None,
) -> BoundsEstimate:
    """Estimate ``zeta_Nd``, ``zeta_Nd_dot``, a ``rho`` polynomial and ``M_Omega`` bounds.

    ``rho`` depends on the filter gains through the state reconstruction,
    hence the ``gains`` argument (``ks`` and ``beta`` are not used).
    """
    budget = budget or BoundsBudget()
    rng = np.random.default_rng(budget.seed)
    n = max(2, int(round(budget.t_window / budget.nd_step)) + 1)
    t = np.linspace(0.0, budget.t_window, n)
    _, nd, ndd, pairs = desired_nd(model, traj, t)
    nd_max, zeta_nd = _sup_with_margin(nd, pairs)
    ndd_max, zeta_ndd = _sup_with_margin(ndd, pairs)
    limits = _switch_limits(model, traj, t, pairs)
    for a, b in limits:
        zeta_nd = max(zeta_nd, abs(a))
        zeta_ndd = max(zeta_ndd, abs(b))

    # rho: |N(t,z) - N_d(t)| / |z| on spherical shells
    radii = np.asarray(budget.rho_radii, dtype=float)
    ts = rng.uniform(0.0, budget.t_window, budget.rho_times)
    dirs = rng.normal(size=(3, budget.rho_directions))
    dirs /= np.linalg.norm(dirs, axis=0)
    tt = np.repeat(ts, budget.rho_directions)
    dd = np.tile(dirs, budget.rho_times)
    nd_t = n_total(model, traj, gains, ts, np.zeros((3, ts.size)), with_pair=True)
    nd_rep = np.repeat(nd_t[0], budget.rho_directions)
    pair_rep = np.repeat(nd_t[1], budget.rho_directions)
    raw = []
    excluded = 0
    for s in radii:
        z = s * dd
        nt, pz = n_total(model, traj, gains, tt, z, with_pair=True)
        # N_d jumps where the schedule switches pairs, so N - N_d does not
        # vanish with |z| across a switch; such samples carry no rho info
        keep = pz == pair_rep
        excluded += int(np.count_nonzero(~keep))
        ratio = np.abs(nt - nd_rep)[keep] / s
        raw.append(float(np.nanmax(ratio)) if ratio.size else 0.0)
    env = np.maximum.accumulate(np.asarray(raw))
    # cover each gap between radii by the next radius' envelope value
    env_shift = np.append(env[1:], env[-1])
    coeffs = _fit_rho(radii, env_shift, budget.rho_degree)

    m_lo, m_hi = m_omega_range(model, traj, budget)
    _, nd0, _, _ = desired_nd(model, traj, [0.0])
    return BoundsEstimate(
        zeta_nd=float(zeta_nd),
        zeta_nd_dot=float(zeta_ndd),
        nd_sampled_max=nd_max,
        nd_dot_sampled_max=ndd_max,
        rho_radii=[float(r) for r in radii],
        rho_envelope=[float(v) for v in env],
        rho_coeffs=[float(c) for c in coeffs],
        m_omega_min=m_lo,
        m_omega_max=m_hi,
        nd0=float(nd0[0]),
        kinks=len(limits) // 2,
        rho_excluded=excluded,
        budget=asdict(budget),
    )
