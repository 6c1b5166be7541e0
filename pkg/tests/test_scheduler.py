import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

import oracles
from fescycle.errors import DegeneratePairError, NoFeasiblePairError
from fescycle.geometry import RiderGeometry
from fescycle.muscles import GROUPS, MuscleGroupId
from fescycle.scheduler import (
    PAIRS,
    ActivationRatios,
    bisect_switch_angle,
    combined_force,
    gast_relation,
    glut_relation,
    pattern_table,
    q_gast,
    q_glut,
    schedule,
    select_activation,
    solve_pair_ratio,
    tangency_residual,
    tangent_and_radial,
)

G = MuscleGroupId


def fold(a):
    return math.remainder(a, 2 * math.pi)


def oracle_glut(geo, q3, sense):
    q1, q2 = oracles.ik_bisection(geo, q3)
    return fold(q1 + q2 - q3 - sense * math.pi / 2)


def oracle_gast(geo, q3, sense):
    p = oracles.pedal_point(geo, q3)
    return fold(math.atan2(p[1], p[0]) - q3 + sense * math.pi / 2)


def oracle_roots(f):
    grid = np.linspace(0, 2 * np.pi, 1441)
    vals = [f(q) for q in grid]
    out = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa * fb < 0 and abs(fa - fb) < 1.0:
            out.append(brentq(f, a, b, xtol=1e-15, rtol=1e-15))
    return out


@pytest.mark.parametrize("sense", [1, -1])
def test_switch_angles_match_bisection_of_defining_relations(sense):
    geo = RiderGeometry()
    qg = q_glut(geo, sense)
    qs = q_gast(geo, sense)
    rg = oracle_roots(lambda q: oracle_glut(geo, q, sense))
    rs = oracle_roots(lambda q: oracle_gast(geo, q, sense))
    assert min(abs(fold(qg - r)) for r in rg) < 1e-10
    assert min(abs(fold(qs - r)) for r in rs) < 1e-10


def test_switch_angle_values_and_package_bisection():
    geo = RiderGeometry()
    assert q_glut(geo, 1) == pytest.approx(2.919459, abs=1e-6)
    assert q_gast(geo, 1) == pytest.approx(1.164773, abs=1e-6)
    roots = bisect_switch_angle(lambda q: glut_relation(geo, q))
    assert any(abs(fold(r - q_glut(geo))) < 1e-12 for r in roots)
    roots = bisect_switch_angle(lambda q: gast_relation(geo, q))
    assert any(abs(fold(r - q_gast(geo))) < 1e-12 for r in roots)


@pytest.mark.parametrize("sense", [1, -1])
def test_single_group_tangent_at_switch_angles(sense):
    from fescycle.model import CycleRider

    m = CycleRider(sense=sense)
    qg = q_glut(m.geometry, sense)
    v = m.group_vectors(qg)[G.GLUT]
    t_hat, r_hat = tangent_and_radial(qg, sense)
    assert abs(np.dot(v, r_hat)) / np.linalg.norm(v) < 1e-12
    assert np.dot(v, t_hat) > 0
    qs = q_gast(m.geometry, sense)
    v = m.group_vectors(qs)[G.GAST]
    t_hat, r_hat = tangent_and_radial(qs, sense)
    assert abs(np.dot(v, r_hat)) / np.linalg.norm(v) < 1e-12
    assert np.dot(v, t_hat) > 0


def test_pattern_row_at_q_glut_is_pure_glut(rider):
    row = pattern_table(rider, angles=[q_glut(rider.geometry)])[0]
    assert row.ratios[G.GLUT] == pytest.approx(1.0, abs=1e-9)
    row = pattern_table(rider, angles=[q_gast(rider.geometry)])[0]
    assert row.ratios[G.GAST] == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("n", [360, 97])
def test_pattern_table_rows_and_tangency(rider, n):
    rows = pattern_table(rider, n)
    assert len(rows) == n
    assert max(r.tangency for r in rows) <= 1e-8
    for r in rows:
        assert r.ratios.pair in PAIRS
        assert sum(r.ratios.as_tuple()) == pytest.approx(1.0, abs=1e-15)


def test_pattern_covers_all_pairs_in_cyclic_order(rider):
    rows = pattern_table(rider, 720)
    seq = [PAIRS.index(r.ratios.pair) for r in rows]
    changes = [(a, b) for a, b in zip(seq, seq[1:] + seq[:1]) if a != b]
    assert len(changes) == 4
    # forward pedaling walks PAIRS from the end: Gast-Quad, Ham-Gast, Glut-Ham, Quad-Glut
    assert all((a - b) % 4 == 1 for a, b in changes)


def test_clockwise_pattern_walks_adjacent_pairs(rider_cw):
    rows = pattern_table(rider_cw, 720)
    assert max(r.tangency for r in rows) <= 1e-8
    seq = [PAIRS.index(r.ratios.pair) for r in rows]
    changes = [(a, b) for a, b in zip(seq, seq[1:] + seq[:1]) if a != b]
    assert len(changes) == 4
    steps = {(b - a) % 4 for a, b in changes}
    # adjacent pairs only, always walking the same way round
    assert steps in ({1}, {3})


@given(st.floats(0, 2 * math.pi), st.floats(-6, 6))
@settings(max_examples=200, deadline=None)
def test_schedule_is_tangent_and_forward(q3, cadence):
    m = _RIDER
    vecs = m.group_vectors(q3, cadence)
    ratios = schedule(vecs, q3)
    f = combined_force(vecs, ratios)
    t_hat, _ = tangent_and_radial(q3)
    assert tangency_residual(vecs, ratios, q3) <= 1e-8
    assert np.dot(f, t_hat) > 0
    chi = ratios.as_tuple()
    assert all(0.0 <= c <= 1.0 for c in chi)
    assert sum(1 for g, c in zip(GROUPS, chi) if c and g not in ratios.pair) == 0


def test_schedule_keeps_previous_pair_when_feasible(rider):
    q3 = 0.5
    first = select_activation(rider, q3, 0.0)
    again = select_activation(rider, q3 + 1e-3, 0.0, first)
    assert again.pair == first.pair


def test_solve_pair_ratio_cases():
    r_hat, t_hat = (1.0, 0.0), (0.0, 1.0)
    assert solve_pair_ratio((1.0, 1.0), (-1.0, 1.0), r_hat, t_hat) == pytest.approx(0.5)
    assert solve_pair_ratio((1.0, -1.0), (-1.0, -1.0), r_hat, t_hat) is None
    assert solve_pair_ratio((1.0, 1.0), (2.0, 1.0), r_hat, t_hat) is None
    assert solve_pair_ratio((0.0, 1.0), (0.0, 2.0), r_hat, t_hat) == 0.0
    with pytest.raises(DegeneratePairError):
        solve_pair_ratio((0.0, -1.0), (0.0, -2.0), r_hat, t_hat)


def test_no_feasible_pair_raises():
    vecs = {g: (1.0, -1.0) for g in GROUPS}
    with pytest.raises(NoFeasiblePairError):
        schedule(vecs, 0.0)


def test_activation_ratios_reject_non_adjacent_pair():
    with pytest.raises(ValueError):
        ActivationRatios({G.GLUT: 0.5, G.GAST: 0.5}, (G.GLUT, G.GAST))


from fescycle.model import CycleRider as _CR  # noqa: E402

_RIDER = _CR()
