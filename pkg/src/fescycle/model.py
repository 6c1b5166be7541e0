"""The cycle-rider bundle: geometry, inertia, passive joints, muscles, disturbance.

Everything the controller and simulator need at one crank state comes from
:meth:`CycleRider.point`.  The controller works in the *forward* frame
``q = sense * q3`` so that a positive control always drives the crank
forward; with ``sense = +1`` (counter-clockwise) the two frames coincide.

In the forward frame the crank obeys::

    M qddot + sense*h + d = Omega_chi * u,    h = C q3dot + g - Me - Mv

:meth:`CycleRider.batch` evaluates the same quantities on numpy arrays for
the bound estimation and trace post-processing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Optional

import numpy as np

from .dynamics import BodyParams, DisturbanceSpec, PassiveParams, crank_terms
from .errors import DegenerateForceError, DomainError, ModelError, NoFeasiblePairError, SingularityError
from .geometry import RiderGeometry, check_reachability
from .muscles import GROUPS, MuscleId, MuscleModel, _group_vectors, default_muscles
from .scheduler import CHI_TOL, PAIRS, ActivationRatios, combined_force, schedule

_GROUP_INDEX = {g: k for k, g in enumerate(GROUPS)}
# (index of group i, index of group j) for every admissible pair
_PAIR_IDX = tuple((_GROUP_INDEX[a], _GROUP_INDEX[b]) for a, b in PAIRS)
_MUSCLE_ORDER = (MuscleId.E1, MuscleId.E2, MuscleId.F2, MuscleId.EF3, MuscleId.FE3, MuscleId.F4)


class Point(NamedTuple):
    """Model quantities at one crank state (forward frame)."""

    t: float
    q: float
    qdot: float
    q3: float
    q1: float
    q2: float
    M: float
    h: float
    d: float
    pair: int
    chi: float
    omega_chi: float
    fx: float
    fy: float


def _muscle_coeffs(model: MuscleModel) -> tuple:
    p0, p1, pph = model.pennation
    gain, depth, rph, slope = model.recruitment
    return (
        model.moment_arm,
        p0, p1, math.cos(pph), math.sin(pph),
        gain, depth, math.cos(rph), math.sin(rph), slope,
        model.eta_floor, model.omega_floor,
    )


@dataclass(frozen=True)
class CycleRider:
    geometry: RiderGeometry = field(default_factory=RiderGeometry)
    body: BodyParams = field(default_factory=BodyParams)
    passive: PassiveParams = field(default_factory=PassiveParams)
    muscles: Mapping = field(default_factory=default_muscles)
    disturbance: DisturbanceSpec = field(default_factory=DisturbanceSpec)
    sense: int = 1
    force_floor: float = 1e-9
    reach_margin: float = 1e-3

    def __post_init__(self):
        if self.sense not in (1, -1):
            raise ModelError("sense must be +1 (counter-clockwise) or -1 (clockwise)")
        muscles = {MuscleId(k): v for k, v in dict(self.muscles).items()}
        if set(muscles) != set(MuscleId):
            raise ModelError(f"need exactly the muscles {[m.value for m in MuscleId]}")
        object.__setattr__(self, "muscles", muscles)
        if not self.force_floor > 0.0:
            raise ModelError("force_floor must be positive")
        check_reachability(self.geometry, self.reach_margin)
        self.body.check_against(self.geometry)
        object.__setattr__(self, "_coeffs", tuple(_muscle_coeffs(muscles[m]) for m in _MUSCLE_ORDER))
        object.__setattr__(self, "_kernel", _make_kernel(self))

    # -- scalar path ---------------------------------------------------------

    def muscle_omegas(self, q3: float, cadence: float) -> tuple:
        """Torque per volt of the six muscles, in ``_MUSCLE_ORDER``."""
        c, s = math.cos(q3), math.sin(q3)
        c2, s2 = c * c - s * s, 2.0 * s * c
        c3, s3 = c * c2 - s * s2, s * c2 + c * s2
        v = cadence if cadence > 0.0 else 0.0
        out = []
        for arm, p0, p1, pc, ps, gain, depth, rc, rs, slope, eta_floor, om_floor in self._coeffs:
            zeta = arm[0] + arm[1] * c + arm[2] * s + arm[3] * c2 + arm[4] * s2 + arm[5] * c3 + arm[6] * s3
            cos_a = math.cos(p0 + p1 * (c * pc + s * ps))
            eta = gain * (1.0 + depth * (c * rc + s * rs)) / (1.0 + slope * v)
            if eta < eta_floor:
                eta = eta_floor
            om = zeta * cos_a * eta
            if om < om_floor:
                raise ModelError(f"torque gain {om:.3e} below floor at q3={q3:.6f}")
            out.append(om)
        return tuple(out)

    def group_vectors(self, q3: float, q3dot: float = 0.0) -> dict:
        """Pedal force per volt of each group at crank state ``(q3, q3dot)``."""
        from .geometry import inverse_kinematics

        q1, q2 = inverse_kinematics(self.geometry, q3)
        om = dict(zip(_MUSCLE_ORDER, self.muscle_omegas(q3, self.sense * q3dot)))
        return _group_vectors(self.geometry, om, q1, q2)

    def disturbance_at(self, t: float) -> float:
        d = self.disturbance
        return d.bias + d.amplitude * math.sin(d.frequency * t + d.phase)

    def point(self, t: float, q: float, qdot: float, prev_pair: Optional[int] = None) -> Point:
        """Evaluate the model at forward-frame state ``(q, qdot)``.

        ``prev_pair`` is the index (into ``scheduler.PAIRS``) of the pair
        active before; it is kept whenever it is still feasible.
        """
        return self._kernel(t, q, qdot, prev_pair)

    def point_reference(self, t: float, q: float, qdot: float, prev_pair: Optional[int] = None) -> Point:
        """Same as :meth:`point`, assembled from the public building blocks."""
        s = self.sense
        q3, q3dot = s * q, s * qdot
        terms = crank_terms(self.body, self.geometry, self.passive, q3, q3dot)
        cs = terms.chain
        om = dict(zip(_MUSCLE_ORDER, (self.muscles[m].omega(q3, qdot) for m in _MUSCLE_ORDER)))
        vecs = _group_vectors(self.geometry, om, cs.q1, cs.q2)
        prev = None
        if prev_pair is not None:
            a, b = PAIRS[prev_pair]
            prev = ActivationRatios({a: 1.0, b: 0.0}, PAIRS[prev_pair])
        ratios = schedule(vecs, q3, prev, s)
        k = PAIRS.index(ratios.pair)
        chi = ratios[ratios.pair[0]]
        f = combined_force(vecs, ratios)
        norm = math.hypot(f[0], f[1])
        if norm < self.force_floor:
            raise DegenerateForceError(f"combined pedal force {norm:.3e} N/V at q3={q3:.6f}")
        h = terms.C * q3dot + terms.g - terms.Me - terms.Mv
        return Point(t, q, qdot, q3, cs.q1, cs.q2, terms.M, h, self.disturbance_at(t), k, chi,
                     norm * self.geometry.l3, float(f[0]), float(f[1]))

    def accel(self, p: Point, u: float) -> float:
        """Forward-frame crank acceleration under control ``u``."""
        return (p.omega_chi * u - p.d - self.sense * p.h) / p.M

    def phi(self, p: Point, qddot: float) -> float:
        """Control that would produce forward acceleration ``qddot`` at ``p``."""
        return (p.M * qddot + self.sense * p.h + p.d) / p.omega_chi

    @staticmethod
    def ratios(p: Point) -> ActivationRatios:
        pair = PAIRS[p.pair]
        return ActivationRatios({pair[0]: p.chi, pair[1]: 1.0 - p.chi}, pair)

    # -- vectorized path -----------------------------------------------------

    def batch(self, t, q, qdot) -> dict:
        """Array version of :meth:`point` (no pair memory) for analysis code.

        Returns a dict with keys ``M, h, d, omega_chi, pair, chi, q1, q2``.
        Where the forward tangent sits exactly on a group direction both
        neighbouring pairs give the same force, so dropping the memory only
        affects the reported pair label.
        """
        t, q, qdot = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (t, q, qdot)))
        geo, body, pp, s = self.geometry, self.body, self.passive, self.sense
        l1, l2, l3 = geo.l1, geo.l2, geo.l3
        q3, q3dot = s * q, s * qdot
        c3, s3 = np.cos(q3), np.sin(q3)
        px, py = l3 * c3 + geo.cx, l3 * s3 + geo.cy
        d2 = px * px + py * py
        dd = np.sqrt(d2)
        a1 = (l1 * l1 + d2 - l2 * l2) / (2.0 * l1 * dd)
        a2 = (l1 * l1 + l2 * l2 - d2) / (2.0 * l1 * l2)
        if np.any(np.abs(a1) > 1.0 + 1e-12) or np.any(np.abs(a2) > 1.0 + 1e-12):
            raise DomainError("pedal out of reach")
        q1 = np.arccos(np.clip(a1, -1.0, 1.0)) + np.arctan2(py, px)
        q2 = np.arccos(np.clip(a2, -1.0, 1.0)) + np.pi
        s1, c1 = np.sin(q1), np.cos(q1)
        s12, c12 = np.sin(q1 + q2), np.cos(q1 + q2)
        sq2, cq2 = np.sin(q2), np.cos(q2)
        j11, j12 = -l1 * s1 - l2 * s12, -l2 * s12
        j21, j22 = l1 * c1 + l2 * c12, l2 * c12
        det = l1 * l2 * sq2
        b1, b2 = -l3 * s3, l3 * c3
        mu1 = (b1 * j22 - b2 * j12) / det
        mu2 = (j11 * b2 - j21 * b1) / det
        w1, w12 = mu1 * q3dot, (mu1 + mu2) * q3dot
        jd1 = mu1 * (-l1 * c1 * w1 - l2 * c12 * w12) + mu2 * (-l2 * c12 * w12)
        jd2 = mu1 * (-l1 * s1 * w1 - l2 * s12 * w12) + mu2 * (-l2 * s12 * w12)
        r1, r2 = -l3 * c3 * q3dot - jd1, -l3 * s3 * q3dot - jd2
        mu1d = (r1 * j22 - r2 * j12) / det
        mu2d = (j11 * r2 - j21 * r1) / det
        m1, m2, lc1, lc2 = body.thigh_mass, body.shank_mass, body.thigh_com, body.shank_com
        m22 = body.shank_inertia + m2 * lc2 * lc2
        m12 = m22 + m2 * l1 * lc2 * cq2
        m11 = body.thigh_inertia + m1 * lc1 * lc1 + m22 + m2 * (l1 * l1 + 2.0 * l1 * lc2 * cq2)
        M = mu1 * (m11 * mu1 + m12 * mu2) + mu2 * (m12 * mu1 + m22 * mu2) + body.crank_inertia
        hh = -m2 * l1 * lc2 * sq2
        cmu1 = hh * mu2 * q3dot * mu1 + hh * (mu1 + mu2) * q3dot * mu2
        cmu2 = -hh * mu1 * q3dot * mu1
        C = mu1 * (m11 * mu1d + m12 * mu2d + cmu1) + mu2 * (m12 * mu1d + m22 * mu2d + cmu2)
        gc12 = body.gravity * m2 * lc2 * c12
        g = mu1 * (body.gravity * (m1 * lc1 + m2 * l1) * c1 + gc12) + mu2 * gc12
        qd1, qd2 = mu1 * q3dot, mu2 * q3dot
        e1 = -pp.k11 * np.exp(-pp.k12 * q1) * (q1 - pp.k13)
        e2 = -pp.k21 * np.exp(-pp.k22 * q2) * (q2 - pp.k23)
        v1 = pp.b11 * np.tanh(-pp.b12 * qd1) - pp.b13 * qd1
        v2 = pp.b21 * np.tanh(-pp.b22 * qd2) - pp.b23 * qd2
        h = C * q3dot + g - (mu1 * e1 + mu2 * e2) - (mu1 * v1 + mu2 * v2)

        # muscle gains
        cad = np.maximum(qdot, 0.0)
        om = []
        for arm, p0, p1, pc, ps, gain, depth, rc, rs, slope, eta_floor, om_floor in self._coeffs:
            zeta = (arm[0] + arm[1] * c3 + arm[2] * s3 + arm[3] * np.cos(2 * q3) + arm[4] * np.sin(2 * q3)
                    + arm[5] * np.cos(3 * q3) + arm[6] * np.sin(3 * q3))
            cos_a = np.cos(p0 + p1 * (c3 * pc + s3 * ps))
            eta = np.maximum(gain * (1.0 + depth * (c3 * rc + s3 * rs)) / (1.0 + slope * cad), eta_floor)
            o = zeta * cos_a * eta
            if np.any(o < om_floor):
                raise ModelError("muscle torque gain below floor")
            om.append(o)
        o_e1, o_e2, o_f2, o_ef3, o_fe3, o_f4 = om
        ux, uy = px / dd, py / dd
        s0 = -l1 * sq2 / dd
        R1, R0, R3 = np.abs(1.0 / (l1 * sq2)), np.abs(1.0 / (l2 * s0)), np.abs(1.0 / (l2 * sq2))
        W = [
            (R1 * o_e1 * c12, R1 * o_e1 * s12),
            (-R0 * o_f2 * ux - R3 * o_ef3 * c1, -R0 * o_f2 * uy - R3 * o_ef3 * s1),
            (-R0 * o_f4 * ux, -R0 * o_f4 * uy),
            (R0 * o_e2 * ux + R3 * o_fe3 * c1, R0 * o_e2 * uy + R3 * o_fe3 * s1),
        ]
        tx, ty = -s * s3, s * c3
        best_f = np.full(q.shape, -np.inf)
        pair = np.full(q.shape, -1)
        chi_out = np.zeros(q.shape)
        fx_out, fy_out = np.zeros(q.shape), np.zeros(q.shape)
        for k, (a, b) in enumerate(_PAIR_IDX):
            (wix, wiy), (wjx, wjy) = W[a], W[b]
            ri, rj = wix * c3 + wiy * s3, wjx * c3 + wjy * s3
            den = rj - ri
            with np.errstate(divide="ignore", invalid="ignore"):
                chi = np.where(den != 0.0, rj / np.where(den != 0.0, den, 1.0), np.nan)
            ok = (chi >= -CHI_TOL) & (chi <= 1.0 + CHI_TOL)
            chi = np.clip(np.nan_to_num(chi), 0.0, 1.0)
            fx = chi * wix + (1.0 - chi) * wjx
            fy = chi * wiy + (1.0 - chi) * wjy
            fwd = fx * tx + fy * ty
            take = ok & (fwd > 0.0) & (fwd > best_f)
            best_f = np.where(take, fwd, best_f)
            pair = np.where(take, k, pair)
            chi_out = np.where(take, chi, chi_out)
            fx_out, fy_out = np.where(take, fx, fx_out), np.where(take, fy, fy_out)
        if np.any(pair < 0):
            bad = float(q3[pair < 0].flat[0])
            raise NoFeasiblePairError(bad)
        dist = self.disturbance
        d = dist.bias + dist.amplitude * np.sin(dist.frequency * t + dist.phase)
        omega_chi = np.hypot(fx_out, fy_out) * l3
        return {"M": M, "h": h, "d": d, "omega_chi": omega_chi, "pair": pair, "chi": chi_out,
                "q1": q1, "q2": q2}

    def phi_batch(self, t, q, qdot, qddot):
        """Array version of :meth:`phi`; also returns ``M / omega_chi``."""
        b = self.batch(t, q, qdot)
        return (b["M"] * qddot + self.sense * b["h"] + b["d"]) / b["omega_chi"], b["M"] / b["omega_chi"], b


def _make_kernel(model: CycleRider):
    """Closure evaluating :meth:`CycleRider.point` with every constant bound locally.

    This is the simulator's inner loop; it trades readability for a ~3x
    speed-up over composing the public functions and is checked against
    :meth:`CycleRider.point_reference` in the tests.
    """
    geo, body, pp, dist = model.geometry, model.body, model.passive, model.disturbance
    sense, floor = model.sense, model.force_floor
    l1, l2, l3, cx, cy = geo.l1, geo.l2, geo.l3, geo.cx, geo.cy
    l1s, l2s, l1l2 = l1 * l1, l2 * l2, l1 * l2
    m1, m2, lc1, lc2 = body.thigh_mass, body.shank_mass, body.thigh_com, body.shank_com
    m22 = body.shank_inertia + m2 * lc2 * lc2
    m2l1lc2 = m2 * l1 * lc2
    m11c = body.thigh_inertia + m1 * lc1 * lc1 + m22 + m2 * l1 * l1
    jc = body.crank_inertia
    g1c = body.gravity * (m1 * lc1 + m2 * l1)
    g2c = body.gravity * m2 * lc2
    k11, k12, k13, k21, k22, k23 = pp.k11, pp.k12, pp.k13, pp.k21, pp.k22, pp.k23
    b11, b12, b13, b21, b22, b23 = pp.b11, pp.b12, pp.b13, pp.b21, pp.b22, pp.b23
    d_bias, d_amp, d_freq, d_phase = dist.bias, dist.amplitude, dist.frequency, dist.phase
    coeffs = model._coeffs
    pair_idx = _PAIR_IDX
    cos, sin, sqrt, acos, atan2, exp, tanh, hypot, pi = (
        math.cos, math.sin, math.sqrt, math.acos, math.atan2, math.exp, math.tanh, math.hypot, math.pi)
    two_pi = 2.0 * pi

    def _acos(x, what, q3):
        if x > 1.0 or x < -1.0:
            if abs(x) - 1.0 > 1e-12:
                raise DomainError(f"{what}: pedal out of reach at q3={q3:.6f}")
            x = 1.0 if x > 0.0 else -1.0
        return acos(x)

    def kernel(t, q, qdot, prev_pair=None):
        q3, q3dot = sense * q, sense * qdot
        c3, s3 = cos(q3), sin(q3)
        px, py = l3 * c3 + cx, l3 * s3 + cy
        d2 = px * px + py * py
        dd = sqrt(d2)
        q1 = _acos((l1s + d2 - l2s) / (2.0 * l1 * dd), "hip angle", q3) + atan2(py, px)
        q2 = _acos((l1s + l2s - d2) / (2.0 * l1l2), "knee angle", q3) + pi
        q12 = q1 + q2
        if not (pi < q12 < two_pi):
            raise DomainError(f"crank angle {q3:.6f} puts the shank outside (pi, 2*pi)")
        sq2, cq2 = sin(q2), cos(q2)
        if abs(sq2) < 1e-9:
            raise SingularityError(f"knee angle {q2:.6f} rad is singular")
        s1, c1 = sin(q1), cos(q1)
        s12, c12 = sin(q12), cos(q12)
        j11, j12 = -l1 * s1 - l2 * s12, -l2 * s12
        j21, j22 = l1 * c1 + l2 * c12, l2 * c12
        det = l1l2 * sq2
        b1, b2 = -l3 * s3, l3 * c3
        mu1 = (b1 * j22 - b2 * j12) / det
        mu2 = (j11 * b2 - j21 * b1) / det
        w1, w12 = mu1 * q3dot, (mu1 + mu2) * q3dot
        jd1 = mu1 * (-l1 * c1 * w1 - l2 * c12 * w12) + mu2 * (-l2 * c12 * w12)
        jd2 = mu1 * (-l1 * s1 * w1 - l2 * s12 * w12) + mu2 * (-l2 * s12 * w12)
        r1, r2 = -b2 * q3dot - jd1, b1 * q3dot - jd2
        mu1d = (r1 * j22 - r2 * j12) / det
        mu2d = (j11 * r2 - j21 * r1) / det
        m12 = m22 + m2l1lc2 * cq2
        m11 = m11c + 2.0 * m2l1lc2 * cq2
        M = mu1 * (m11 * mu1 + m12 * mu2) + mu2 * (m12 * mu1 + m22 * mu2) + jc
        hh = -m2l1lc2 * sq2
        cmu1 = hh * q3dot * mu2 * (mu1 + mu1 + mu2)
        cmu2 = -hh * mu1 * q3dot * mu1
        C = mu1 * (m11 * mu1d + m12 * mu2d + cmu1) + mu2 * (m12 * mu1d + m22 * mu2d + cmu2)
        gc12 = g2c * c12
        g = mu1 * (g1c * c1 + gc12) + mu2 * gc12
        qd1, qd2 = mu1 * q3dot, mu2 * q3dot
        pe = mu1 * (-k11 * exp(-k12 * q1) * (q1 - k13)) + mu2 * (-k21 * exp(-k22 * q2) * (q2 - k23))
        pv = mu1 * (b11 * tanh(-b12 * qd1) - b13 * qd1) + mu2 * (b21 * tanh(-b22 * qd2) - b23 * qd2)
        h = C * q3dot + g - pe - pv

        # muscle gains (cadence is the forward rate)
        c2a, s2a = c3 * c3 - s3 * s3, 2.0 * s3 * c3
        c3a, s3a = c3 * c2a - s3 * s2a, s3 * c2a + c3 * s2a
        v = qdot if qdot > 0.0 else 0.0
        om = []
        for arm, p0, p1, pc, ps, gain, depth, rc, rs, slope, eta_floor, om_floor in coeffs:
            eta = gain * (1.0 + depth * (c3 * rc + s3 * rs)) / (1.0 + slope * v)
            if eta < eta_floor:
                eta = eta_floor
            o = (arm[0] + arm[1] * c3 + arm[2] * s3 + arm[3] * c2a + arm[4] * s2a + arm[5] * c3a
                 + arm[6] * s3a) * cos(p0 + p1 * (c3 * pc + s3 * ps)) * eta
            if o < om_floor:
                raise ModelError(f"torque gain {o:.3e} below floor at q3={q3:.6f}")
            om.append(o)
        o_e1, o_e2, o_f2, o_ef3, o_fe3, o_f4 = om
        ux, uy = (l1 * c1 + l2 * c12), (l1 * s1 + l2 * s12)
        rho = hypot(ux, uy)
        ux, uy = ux / rho, uy / rho
        s0 = -l1 * sq2 / rho
        if abs(s0) < 1e-9:
            raise SingularityError("hip-pedal line parallel to the shank")
        R1, R0, R3 = abs(1.0 / (l1 * sq2)), abs(1.0 / (l2 * s0)), abs(1.0 / (l2 * sq2))
        a = R1 * o_e1
        b = R0 * o_f2
        c = R3 * o_ef3
        e = R0 * o_e2
        f = R3 * o_fe3
        gg = R0 * o_f4
        W = (
            (a * c12, a * s12),
            (-b * ux - c * c1, -b * uy - c * s1),
            (-gg * ux, -gg * uy),
            (e * ux + f * c1, e * uy + f * s1),
        )
        tx, ty = -sense * s3, sense * c3
        best_f, best_k, best_chi = 0.0, -1, 0.0
        for k in range(4):
            ia, ib = pair_idx[k]
            wix, wiy = W[ia]
            wjx, wjy = W[ib]
            ri = wix * c3 + wiy * s3
            rj = wjx * c3 + wjy * s3
            ti = wix * tx + wiy * ty
            tj = wjx * tx + wjy * ty
            den = rj - ri
            if den == 0.0:
                if ri != 0.0 or (ti <= 0.0 and tj <= 0.0):
                    continue
                chi = 1.0 if ti >= tj else 0.0
            else:
                chi = rj / den
                if chi < -1e-12 or chi > 1.0 + 1e-12:
                    continue
                chi = 0.0 if chi < 0.0 else (1.0 if chi > 1.0 else chi)
            fwd = chi * ti + (1.0 - chi) * tj
            if fwd <= 0.0:
                continue
            if k == prev_pair:
                best_f, best_k, best_chi = fwd, k, chi
                break
            if best_k < 0 or fwd > best_f:
                best_f, best_k, best_chi = fwd, k, chi
        if best_k < 0:
            raise NoFeasiblePairError(q3, t)
        ia, ib = pair_idx[best_k]
        fx = best_chi * W[ia][0] + (1.0 - best_chi) * W[ib][0]
        fy = best_chi * W[ia][1] + (1.0 - best_chi) * W[ib][1]
        norm = hypot(fx, fy)
        if norm < floor:
            raise DegenerateForceError(f"combined pedal force {norm:.3e} N/V at q3={q3:.6f}")
        d = d_bias + d_amp * sin(d_freq * t + d_phase)
        return Point(t, q, qdot, q3, q1, q2, M, h, d, best_k, best_chi, norm * l3, fx, fy)

    return kernel
