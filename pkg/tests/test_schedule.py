import itertools

import numpy as np
import pytest

from dirac.core import RandomSource, Signal, prior_sample, squared_exponential_prior
from dirac.degrade import GaussianBlurProcess, GaussianMaskInpaintProcess
from dirac.schedule import (
    DistanceTable,
    SeveritySchedule,
    build_distance_table,
    greedy_schedule,
    linear_schedule,
    load_distance_table,
    load_schedule,
    max_edge_distance,
    pairwise_distance,
    rmse_metric,
    save_distance_table,
    save_schedule,
    uniform_schedule,
)


def _index_table(n):
    """d(i,j) = |i - j|: the metric-linear-in-index reference table."""
    idx = np.arange(n, dtype=float)
    d = np.abs(idx[:, None] - idx[None, :])
    return DistanceTable(np.linspace(0, 1, n), d, np.linspace(0, 1, n))


def _brute_force_minmax(table, m):
    n = table.size
    best = np.inf
    for combo in itertools.combinations(range(1, n - 1), m):
        sel = [0, *combo, n - 1]
        best = min(best, max_edge_distance(table, sel))
    return best


# --- SeveritySchedule ------------------------------------------------------

def test_schedule_requires_endpoints():
    with pytest.raises(ValueError):
        SeveritySchedule(((0.1, 0.0), (1.0, 1.0)))
    with pytest.raises(ValueError):
        SeveritySchedule(((0.0, 0.0), (0.9, 1.0)))


def test_schedule_monotonicity_enforced():
    with pytest.raises(ValueError):
        SeveritySchedule(((0.0, 0.0), (0.5, 2.0), (0.5, 3.0), (1.0, 4.0)))
    with pytest.raises(ValueError):
        SeveritySchedule(((0.0, 2.0), (1.0, 1.0)))


def test_interpolate_exact_at_knots_and_midpoint():
    sched = linear_schedule(0.3, 3.0)
    assert sched.interpolate(0.0) == 0.3
    assert sched.interpolate(1.0) == 3.0
    assert sched.interpolate(0.5) == pytest.approx(1.65)
    with pytest.raises(ValueError):
        sched.interpolate(1.1)


def test_interpolate_monotone_on_grid():
    sched = SeveritySchedule(((0.0, 0.0), (0.2, 0.1), (0.7, 1.4), (1.0, 1.6)))
    vals = [sched.interpolate(t) for t in np.linspace(0, 1, 101)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


# --- distances -------------------------------------------------------------

def test_pairwise_distance_zero_for_equal_severities():
    proc = GaussianMaskInpaintProcess((8, 8))
    prior = squared_exponential_prior((8, 8))
    data = [prior_sample(prior, RandomSource(0).split(i)) for i in range(4)]
    assert pairwise_distance(proc, 0.4, 0.4, data) == 0.0


def test_pairwise_distance_constant_image_blur():
    proc = GaussianBlurProcess((8, 8))
    const = [Signal.from_array(np.full((8, 8), 0.7))]
    assert pairwise_distance(proc, 0.1, 0.9, const) == pytest.approx(0.0, abs=1e-12)


def test_pairwise_distance_matches_brute_force():
    proc = GaussianMaskInpaintProcess((8, 8))
    prior = squared_exponential_prior((8, 8))
    data = [prior_sample(prior, RandomSource(1).split(i)) for i in range(64)]
    got = pairwise_distance(proc, 0.2, 0.8, data)
    brute = np.mean([
        np.sqrt(np.mean((proc.apply(0.2, x).values - proc.apply(0.8, x).values) ** 2))
        for x in data
    ])
    assert got == pytest.approx(brute, abs=1e-12)


def test_build_distance_table_consistency():
    proc = GaussianMaskInpaintProcess((6, 6))
    prior = squared_exponential_prior((6, 6))
    data = [prior_sample(prior, RandomSource(2).split(i)) for i in range(3)]
    table = build_distance_table(proc, data, n_candidates=11)
    assert table.size == 11
    i, j = 2, 7
    expected = pairwise_distance(proc, table.candidates[i], table.candidates[j], data)
    assert table.d[i, j] == pytest.approx(expected, abs=1e-12)
    with pytest.raises(ValueError):
        build_distance_table(proc, [], n_candidates=5)


def test_distance_table_validation():
    bad = np.ones((3, 3))
    with pytest.raises(ValueError):
        DistanceTable(np.linspace(0, 1, 3), bad, np.zeros(3))  # nonzero diagonal


# --- greedy ----------------------------------------------------------------

def test_greedy_m_zero_endpoints_only():
    sched = greedy_schedule(_index_table(9), 0)
    assert sched.knots == ((0.0, 0.0), (1.0, 1.0))


def test_greedy_linear_table_splits_middle():
    sched = greedy_schedule(_index_table(5), 1)
    assert [t for t, _ in sched.knots] == [0.0, 0.5, 1.0]


def test_greedy_against_brute_force_small():
    # greedy dominates the exhaustive optimum by a bounded factor; it is not
    # exactly optimal for m >= 2 (sequential splits cannot be revised), the
    # worst observed factor on these tables is ~1.29
    rng = RandomSource(3)
    prior = squared_exponential_prior((6, 6))
    data = [prior_sample(prior, rng.split(i)) for i in range(4)]
    for proc in (GaussianMaskInpaintProcess((6, 6)), GaussianBlurProcess((6, 6))):
        for n in (8, 12):
            table = build_distance_table(proc, data, n_candidates=n)
            idx_of = {round(float(t), 12): i for i, t in enumerate(table.candidates)}
            for m in (1, 2, 3):
                sched = greedy_schedule(table, m)
                sel = [idx_of[round(t, 12)] for t, _ in sched.knots]
                greedy_max = max_edge_distance(table, sel)
                optimum = _brute_force_minmax(table, m)
                assert greedy_max >= optimum - 1e-15
                assert greedy_max <= 1.5 * optimum
                if m == 1:
                    # a single split is exhaustive by construction
                    assert greedy_max == pytest.approx(optimum, rel=1e-12)


def test_greedy_trace_non_increasing():
    proc = GaussianMaskInpaintProcess((8, 8))
    prior = squared_exponential_prior((8, 8))
    data = [prior_sample(prior, RandomSource(4).split(i)) for i in range(4)]
    table = build_distance_table(proc, data, n_candidates=31)
    sched = greedy_schedule(table, 8)
    trace = sched.max_edge_trace
    assert len(trace) == 9
    assert all(b <= a + 1e-15 for a, b in zip(trace, trace[1:]))


def test_greedy_beats_uniform():
    proc = GaussianBlurProcess((8, 8))
    prior = squared_exponential_prior((8, 8))
    data = [prior_sample(prior, RandomSource(5).split(i)) for i in range(4)]
    table = build_distance_table(proc, data, n_candidates=21)
    idx_of = {round(float(t), 12): i for i, t in enumerate(table.candidates)}
    for m in (1, 2, 5, 10):
        g = greedy_schedule(table, m)
        u = uniform_schedule(table, m)
        g_max = max_edge_distance(table, [idx_of[round(t, 12)] for t, _ in g.knots])
        u_max = max_edge_distance(table, [idx_of[round(t, 12)] for t, _ in u.knots])
        assert g_max <= u_max + 1e-15


def test_greedy_local_optimality():
    # moving any single interior knot cannot reduce the max edge
    table = _index_table(11)
    sched = greedy_schedule(table, 3)
    idx_of = {round(float(t), 12): i for i, t in enumerate(table.candidates)}
    sel = [idx_of[round(t, 12)] for t, _ in sched.knots]
    base = max_edge_distance(table, sel)
    for pos in range(1, len(sel) - 1):
        for alt in range(1, table.size - 1):
            if alt in sel:
                continue
            moved = sel[:pos] + [alt] + sel[pos + 1:]
            assert max_edge_distance(table, sorted(moved)) >= base - 1e-15


def test_greedy_degenerate_table_warns():
    n = 7
    table = DistanceTable(np.linspace(0, 1, n), np.zeros((n, n)), np.linspace(0, 1, n))
    sched = greedy_schedule(table, 2)
    assert sched.warning is not None
    assert len(sched.knots) == 4


def test_greedy_m_too_large():
    with pytest.raises(ValueError):
        greedy_schedule(_index_table(5), 4)


# --- persistence -------------------------------------------------------------

def test_schedule_file_roundtrip_and_determinism(tmp_path):
    sched = SeveritySchedule(((0.0, 0.0), (0.31, 0.52), (1.0, 1.6)))
    p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
    save_schedule(sched, p1, process_name="inpaint", n_candidates=11)
    save_schedule(sched, p2, process_name="inpaint", n_candidates=11)
    assert p1.read_bytes() == p2.read_bytes()
    back = load_schedule(p1)
    assert back.knots == sched.knots


def test_distance_table_roundtrip(tmp_path):
    table = _index_table(6)
    path = tmp_path / "table.txt"
    save_distance_table(table, path)
    back = load_distance_table(path)
    # text format carries 9 significant digits
    np.testing.assert_allclose(back.d, table.d, rtol=1e-8)
    np.testing.assert_allclose(back.candidates, table.candidates, rtol=1e-8)
