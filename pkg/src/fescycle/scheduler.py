"""Activation-ratio design: keep the net pedal force tangent to the crank path.

Only two cyclically adjacent groups are stimulated at a time.  For the pair
``(i, j)`` the ratio ``chi_i`` cancels the radial component of
``chi_i*W_i + (1 - chi_i)*W_j``; the pair is usable when ``chi_i`` lies in
``[0, 1]`` and the resulting force points forward along the crank tangent.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import DegeneratePairError, DomainError, NoFeasiblePairError
from .geometry import RiderGeometry, inverse_kinematics
from .muscles import GROUPS, MuscleGroupId

G = MuscleGroupId
PAIRS = ((G.GLUT, G.HAM), (G.HAM, G.GAST), (G.GAST, G.QUAD), (G.QUAD, G.GLUT))

#: slack allowed on chi in [0, 1] before a pair is declared infeasible
CHI_TOL = 1e-12


@dataclass(frozen=True)
class ActivationRatios:
    """Ratios ``chi`` per group; zero outside ``pair``."""

    chi: Mapping
    pair: tuple

    def __post_init__(self):
        if self.pair not in PAIRS:
            raise ValueError(f"{self.pair} is not an admissible adjacent pair")

    def __getitem__(self, group) -> float:
        return self.chi.get(MuscleGroupId(group), 0.0)

    @property
    def single(self) -> Optional[MuscleGroupId]:
        """The group carrying the whole activation, if the pair degenerates."""
        for g in self.pair:
            if self.chi.get(g, 0.0) == 1.0:
                return g
        return None

    def as_tuple(self) -> tuple:
        return tuple(self.chi.get(g, 0.0) for g in GROUPS)

    @property
    def label(self) -> str:
        return f"{self.pair[0].value}-{self.pair[1].value}"


def tangent_and_radial(q3: float, sense: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Unit forward tangent and outward radial directions at crank angle ``q3``.

    ``sense=+1`` pedals counter-clockwise (``q3`` increasing); ``-1`` flips
    the tangent.
    """
    c, s = math.cos(q3), math.sin(q3)
    return np.array([-sense * s, sense * c]), np.array([c, s])


def solve_pair_ratio(w_i, w_j, r_hat, t_hat) -> Optional[float]:
    """Ratio ``chi_i`` making ``chi_i*w_i + (1-chi_i)*w_j`` forward-tangent.

    Returns ``None`` when the pair cannot do it (ratio outside ``[0, 1]`` or
    the tangential component is not positive).
    """
    ri = w_i[0] * r_hat[0] + w_i[1] * r_hat[1]
    rj = w_j[0] * r_hat[0] + w_j[1] * r_hat[1]
    ti = w_i[0] * t_hat[0] + w_i[1] * t_hat[1]
    tj = w_j[0] * t_hat[0] + w_j[1] * t_hat[1]
    den = rj - ri
    if den == 0.0:
        if ri != 0.0:
            return None
        if ti <= 0.0 and tj <= 0.0:
            raise DegeneratePairError("both forces are radial-free but neither pushes forward")
        return 1.0 if ti >= tj else 0.0
    chi = rj / den
    if chi < -CHI_TOL or chi > 1.0 + CHI_TOL:
        return None
    chi = min(max(chi, 0.0), 1.0)
    if chi * ti + (1.0 - chi) * tj <= 0.0:
        return None
    return chi


def _ratios(pair, chi_i: float) -> ActivationRatios:
    return ActivationRatios({pair[0]: chi_i, pair[1]: 1.0 - chi_i}, pair)


def schedule(vectors: Mapping, q3: float, prev: Optional[ActivationRatios] = None, sense: int = 1) -> ActivationRatios:
    """Pick the feasible adjacent pair for the given group vectors.

    A pair that was active at the previous call wins when still feasible;
    otherwise the pair with the largest forward force per volt is used.
    """
    c, s = math.cos(q3), math.sin(q3)
    r_hat = (c, s)
    t_hat = (-sense * s, sense * c)
    best = None
    for pair in PAIRS:
        wi, wj = vectors[pair[0]], vectors[pair[1]]
        chi = solve_pair_ratio(wi, wj, r_hat, t_hat)
        if chi is None:
            continue
        if prev is not None and pair == prev.pair:
            return _ratios(pair, chi)
        forward = chi * (wi[0] * t_hat[0] + wi[1] * t_hat[1]) + (1.0 - chi) * (wj[0] * t_hat[0] + wj[1] * t_hat[1])
        if best is None or forward > best[0]:
            best = (forward, pair, chi)
    if best is None:
        raise NoFeasiblePairError(q3)
    return _ratios(best[1], best[2])


def select_activation(model, q3: float, q3dot: float, prev: Optional[ActivationRatios] = None) -> ActivationRatios:
    """Activation ratios for the rider ``model`` at crank state ``(q3, q3dot)``."""
    return schedule(model.group_vectors(q3, q3dot), q3, prev, model.sense)


def combined_force(vectors: Mapping, ratios: ActivationRatios) -> np.ndarray:
    return sum((ratios[g] * np.asarray(vectors[g]) for g in GROUPS), np.zeros(2))


def tangency_residual(vectors: Mapping, ratios: ActivationRatios, q3: float) -> float:
    """Radial share of the combined force, ``|F . r_hat| / |F|``."""
    f = combined_force(vectors, ratios)
    return abs(f[0] * math.cos(q3) + f[1] * math.sin(q3)) / math.hypot(f[0], f[1])


# -- switch angles ------------------------------------------------------------


def _wrap(angle: float) -> float:
    return angle % (2.0 * math.pi)


def _angle_diff(a: float, b: float) -> float:
    """``a - b`` folded into ``(-pi, pi]``."""
    d = math.remainder(a - b, 2.0 * math.pi)
    return math.pi if d == -math.pi else d


def glut_relation(geom: RiderGeometry, q3: float, sense: int = 1) -> float:
    """Residual of 'shank direction equals the forward tangent direction'."""
    q1, q2 = inverse_kinematics(geom, q3)
    return _angle_diff(q1 + q2, q3 + sense * math.pi / 2.0)


def gast_relation(geom: RiderGeometry, q3: float, sense: int = 1) -> float:
    """Residual of 'pedal direction from the hip is the backward tangent'."""
    px, py = geom.pedal_position(q3)
    return _angle_diff(math.atan2(py, px), q3 - sense * math.pi / 2.0)


def _asin_candidates(x: float, shift: float) -> list:
    if abs(x) > 1.0:
        raise DomainError(f"no right-angle crossing: arcsine argument {x:.6f}")
    a = math.asin(x)
    return [_wrap(a - shift), _wrap(math.pi - a - shift)]


def q_glut(geom: RiderGeometry, sense: int = 1) -> float:
    """Crank angle at which the gluteal force alone is forward-tangent.

    With the shank along ``q3 + sense*pi/2`` the knee sits at
    ``pedal - l2*(shank unit)``; requiring ``|knee| = l1`` gives
    ``A sin q3 + B cos q3 = -K/2`` with the coefficients below.  Of the two
    arcsine roots, the one on the seated knee branch is returned.
    """
    l1, l2, l3, cx, cy = geom.l1, geom.l2, geom.l3, geom.cx, geom.cy
    ls = -sense * l2
    A = cy * l3 - cx * ls
    B = cx * l3 + cy * ls
    K = l3 * l3 + l2 * l2 - l1 * l1 + cx * cx + cy * cy
    x = K / (-2.0 * math.hypot(A, B))
    return _pick_root(_asin_candidates(x, math.atan2(B, A)), lambda q: glut_relation(geom, q, sense), "gluteal")


def q_gast(geom: RiderGeometry, sense: int = 1) -> float:
    """Crank angle at which the gastrocnemius force alone is forward-tangent.

    The hip-to-pedal line must be perpendicular to the crank,
    ``l3 + cx cos q3 + cy sin q3 = 0``; of the two tangent points the one
    where the pedal lies behind the crank (force pulls forward) is returned.
    """
    l3, cx, cy = geom.l3, geom.cx, geom.cy
    x = l3 / -math.hypot(cx, cy)
    return _pick_root(_asin_candidates(x, math.atan2(cx, cy)), lambda q: gast_relation(geom, q, sense), "gastrocnemius")


def _pick_root(candidates: Sequence[float], relation, name: str) -> float:
    best, best_err = None, math.inf
    for q in candidates:
        try:
            err = abs(relation(q))
        except DomainError:
            continue
        if err < best_err:
            best, best_err = q, err
    if best is None or best_err > 1e-6:
        raise DomainError(f"geometry admits no forward right-angle crossing for the {name} group")
    return best


def bisect_switch_angle(relation, samples: int = 720, xtol: float = 1e-14) -> list:
    """All roots of ``relation(q3)`` on ``[0, 2*pi)`` by bracketing + bisection.

    ``relation`` is an angle residual folded into ``(-pi, pi]``; sign changes
    caused by the fold (jumps near +-pi) are skipped.
    """
    grid = np.linspace(0.0, 2.0 * np.pi, samples + 1)
    vals = [relation(q) for q in grid]
    roots = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa == 0.0:
            roots.append(float(a))
        elif fa * fb < 0.0 and abs(fa - fb) < math.pi:
            roots.append(brentq(relation, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps))
    return roots


# -- stimulation pattern table ----------------------------------------------


@dataclass(frozen=True)
class PatternRow:
    angle: float
    ratios: ActivationRatios
    directions: dict
    tangency: float
    omega_chi: float


def pattern_table(model, n: int = 360, cadence: float = 0.0, angles: Optional[Sequence[float]] = None) -> list:
    """Activation ratios over one crank revolution at a fixed cadence."""
    if angles is None:
        angles = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    rows = []
    prev = None
    for q3 in angles:
        q3 = float(q3)
        vecs = model.group_vectors(q3, cadence)
        ratios = schedule(vecs, q3, prev, model.sense)
        prev = ratios
        f = combined_force(vecs, ratios)
        rows.append(
            PatternRow(
                angle=q3,
                ratios=ratios,
                directions={g: math.atan2(vecs[g][1], vecs[g][0]) for g in GROUPS},
                tangency=tangency_residual(vecs, ratios, q3),
                omega_chi=math.hypot(f[0], f[1]) * model.geometry.l3,
            )
        )
    return rows


PATTERN_FIELDS = (
    ["angle", "pair"]
    + [f"chi_{g.value}" for g in GROUPS]
    + [f"theta_{g.value}" for g in GROUPS]
    + ["tangency_residual", "omega_chi"]
)


def write_pattern_csv(rows: Sequence[PatternRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PATTERN_FIELDS)
        for row in rows:
            writer.writerow(
                [repr(float(row.angle)), row.ratios.label]
                + [repr(float(row.ratios[g])) for g in GROUPS]
                + [repr(float(row.directions[g])) for g in GROUPS]
                + [repr(float(row.tangency)), repr(float(row.omega_chi))]
            )
