from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svmpath.cli import RunConfig
from svmpath.degeneracy import collect_boundary_sets
from svmpath.errors import CyclingError, InputError, PathError
from svmpath.linsys import StepDirection
from svmpath.metrics import theta_grid
from svmpath.oracle import enumerate_partitions_exact, initialize_path
from svmpath.partition import INSIDE, MARGIN, OUTSIDE, Partition, Tolerances, check_relaxed
from svmpath.state import PathState
from svmpath.tracer import CATEGORIES, PathProblem, advance, theta_sets, trace

from conftest import E_VALUES, random_q


def one_margin_point(alpha_i: float, beta_i: float):
    st_ = PathState(0.0, 0.0, np.array([alpha_i]), np.array([1.0]), np.array([1.0]))
    dr = StepDirection(0.0, np.array([beta_i]), np.array([0.0]))
    return st_, dr, Partition([MARGIN])


def test_margin_lower_candidate():
    st_, dr, part = one_margin_point(0.5, -1.0)
    cand = theta_sets(st_, dr, part, Tolerances(0.0, 0.0), np.zeros(1))
    assert cand.value[0] == pytest.approx(0.5, abs=1e-15)
    assert CATEGORIES[cand.category[0]] == "theta_Ml"


def test_margin_lower_candidate_relaxed():
    st_, dr, part = one_margin_point(0.5, -1.0)
    cand = theta_sets(st_, dr, part, Tolerances(0.0, 0.1), np.zeros(1))
    assert cand.value[0] == pytest.approx(0.6, abs=1e-15)


def test_candidate_formulas_for_every_set():
    lab = np.array([OUTSIDE, MARGIN, INSIDE])
    st_ = PathState(0.0, 0.0, np.array([0.0, 0.7, 1.0]), np.array([1.0, 1.0, 1.0]), np.array([1.3, 1.0, 0.8]))
    d = np.array([0.5, 0.5, 0.5])
    dr = StepDirection(0.0, np.array([0.0, 2.5, 0.5]), np.array([-0.2, 0.0, 0.1]))
    cand = theta_sets(st_, dr, Partition(lab), Tolerances(0.05, 0.1), d)
    np.testing.assert_allclose(cand.value, [(1 - 0.05 - 1.3) / -0.2, (1.0 + 0.1 - 0.7) / (2.5 - 0.5),
                                            (1 + 0.05 - 0.8) / 0.1], rtol=1e-14)
    assert [CATEGORIES[c] for c in cand.category] == ["theta_O", "theta_Mu", "theta_I"]


def test_candidates_clamped_at_zero():
    st_ = PathState(0.0, 0.0, np.array([0.0]), np.array([1.0]), np.array([0.9]))
    dr = StepDirection(0.0, np.zeros(1), np.array([-1.0]))
    cand = theta_sets(st_, dr, Partition([OUTSIDE]), Tolerances(), np.zeros(1))
    assert cand.value[0] == 0.0


def test_no_guard_means_no_candidates():
    st_ = PathState(0.0, 0.0, np.array([0.0, 0.5, 1.0]), np.ones(3), np.array([2.0, 1.0, 0.0]))
    dr = StepDirection(0.0, np.array([0.0, 0.1, 0.0]), np.array([0.3, 0.0, -0.3]))
    cand = theta_sets(st_, dr, Partition([OUTSIDE, MARGIN, INSIDE]), Tolerances(), np.array([0.0, 0.5, 0.0]))
    assert cand.minimum() == (np.inf, -1)


def test_flat_path_runs_to_the_end(initial, problem):
    flat = PathProblem(problem.q, problem.y, problem.c0, np.zeros(problem.n), 1.0)
    result = trace(flat, initial[0], initial[1], 0.0)
    assert result.breakpoints == 0
    assert [r.limiting for r in result.records] == ["terminal"]
    assert result.final_state.theta == 1.0


def test_advance_zero_step_is_identity():
    rng = np.random.default_rng(0)
    q, y = random_q(rng, 5)
    st_ = PathState.from_alpha(0.0, 0.2, rng.random(5), np.ones(5), q, y)
    dr = StepDirection(0.3, rng.standard_normal(5), rng.standard_normal(5))
    out = advance(st_, dr, 0.0, np.ones(5))
    assert out is not st_
    for name in ("theta", "alpha0"):
        assert getattr(out, name) == getattr(st_, name)
    for name in ("alpha", "c", "yf"):
        assert np.array_equal(getattr(out, name), getattr(st_, name))


def test_advance_rejects_negative_step():
    st_, dr, _ = one_margin_point(0.5, -1.0)
    with pytest.raises(InputError):
        advance(st_, dr, -1e-3, np.zeros(1))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1e-4, 10.0))
def test_advance_keeps_cached_margins_and_equality(seed, step):
    from svmpath.linsys import build_margin_system, solve_direction
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 12))
    q, y = random_q(rng, n)
    lab = rng.integers(0, 3, n).astype(np.int8)
    lab[0] = MARGIN
    part = Partition(lab)
    d = rng.uniform(0.1, 2.0, n)
    c = np.ones(n)
    alpha = np.where(lab == INSIDE, c, 0.0)
    st_ = PathState.from_alpha(0.0, 0.1, alpha, c, q, y)
    dr = solve_direction(build_margin_system(part, q, y), part, d)
    out = advance(st_, dr, step, d)
    fresh = q @ out.alpha + y * out.alpha0
    assert np.abs(out.yf - fresh).max() <= 1e-7 * (1 + np.abs(fresh).max())
    drift = abs(y @ out.alpha - y @ st_.alpha)
    assert drift <= 1e-10 * (1 + np.abs(step * dr.beta).sum())
    np.testing.assert_allclose(out.c, c + step * d, rtol=1e-15)


def test_problem_validation():
    q = np.eye(2)
    y = np.array([1.0, -1.0])
    with pytest.raises(InputError):
        PathProblem(q, y, np.array([1.0, 1.0]), np.array([-2.0, 0.0]), 1.0)
    with pytest.raises(InputError):
        PathProblem(q, y, np.array([1.0, 1.0]), np.zeros(2), 0.0)
    with pytest.raises(InputError):
        PathProblem(q, y, np.array([1.0]), np.zeros(1), 1.0)


def test_default_protocol(problem):
    n = problem.n
    np.testing.assert_allclose(problem.c0, 0.1 / n, rtol=1e-15)
    np.testing.assert_allclose(problem.c_at(1.0), 1e6 / n, rtol=1e-12)
    assert RunConfig(out_dir=".").b_cap == 10


def test_small_instance_matches_enumeration():
    rng = np.random.default_rng(7)
    q, y = random_q(rng, 4)
    problem = PathProblem.between(q, y, 0.01, 100.0)
    st0, part0 = initialize_path(problem)
    result = trace(problem, st0, part0, 0.0)
    for th in np.linspace(0.0, 1.0, 10):
        ref = enumerate_partitions_exact(q, y, problem.c_at(th))
        got = result.state_at(th)
        assert np.abs(got.alpha - ref.alpha).max() <= 1e-6


def test_iteration_cap_reports_cycling(problem, initial):
    with pytest.raises(PathError, match="suspected cycling") as info:
        trace(problem, initial[0], initial[1], 0.0, max_breakpoints=3)
    assert isinstance(info.value.__cause__, CyclingError)
    assert info.value.k >= 3


def test_b_cap_validated(problem, initial):
    with pytest.raises(InputError):
        trace(problem, initial[0], initial[1], 0.0, b_cap=0)


@pytest.mark.parametrize("e", E_VALUES)
def test_breakpoints_nondecreasing_and_relaxed(paths, problem, e):
    result = paths(e)
    thetas = [r.theta for r in result.records]
    assert all(a <= b for a, b in zip(thetas, thetas[1:]))
    assert result.records[-1].limiting == "terminal"
    assert result.final_state.theta == problem.theta_max
    for k, seg in enumerate(result.segments):
        end = result.segments[k + 1] if k + 1 < len(result.segments) else None
        mid = seg.state_at(0.5 * (seg.theta_start + seg.theta_end))
        assert check_relaxed(mid, seg.partition, seg.tol, problem.y).passed
        if end is not None:
            at_break = PathState(end.theta_start, end.alpha0, end.alpha, end.c, end.yf)
            assert check_relaxed(at_break, end.partition, end.tol, problem.y).passed


@pytest.mark.parametrize("e", E_VALUES)
def test_boundary_indices_satisfy_both_memberships(problem, initial, e):
    seen = []

    def observer(segment, record, state):
        if record.limiting == "terminal":
            return
        part = segment.partition
        b = collect_boundary_sets(state, segment.direction, part, problem.d)
        tol = segment.tol
        for i in b.outside:
            for code in (OUTSIDE, MARGIN):
                lab = part.labels.copy()
                lab[i] = code
                rep = check_relaxed(state, Partition(lab), tol, problem.y)
                assert rep.output_violation[i] == 0 and rep.multiplier_violation[i] == 0
        for i in b.inside:
            for code in (INSIDE, MARGIN):
                lab = part.labels.copy()
                lab[i] = code
                rep = check_relaxed(state, Partition(lab), tol, problem.y)
                assert rep.output_violation[i] == 0 and rep.multiplier_violation[i] == 0
        seen.append(b.size)

    trace(problem, initial[0], initial[1], e, observer=observer)
    assert seen and min(seen) >= 1


@pytest.mark.parametrize("e", E_VALUES)
def test_relative_tolerance_follows_largest_c(paths, e):
    for seg in paths(e).segments:
        assert seg.tol.eps1 == e
        assert seg.tol.eps2 == pytest.approx(e * seg.c.max(), rel=1e-15)


def test_zero_steps_are_bounded(paths, problem):
    for e in E_VALUES:
        run = 0
        for r in paths(e).records:
            run = run + 1 if r.delta_theta == 0 else 0
            assert run <= problem.n


def test_sampled_states_match_recomputation(paths, problem):
    result = paths(0.0)
    for th in theta_grid(problem, 25):
        st_ = result.state_at(th)
        fresh = problem.q @ st_.alpha + problem.y * st_.alpha0
        assert np.abs(st_.yf - fresh).max() <= 1e-7 * (1 + np.abs(fresh).max())
        assert abs(problem.y @ st_.alpha) <= 1e-8 * np.abs(st_.alpha).sum() + 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(E_VALUES), st.integers(1, 4))
def test_random_small_paths_keep_relaxed_conditions(seed, e, b_cap):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 16))
    q, y = random_q(rng, n)
    problem = PathProblem.between(q, y, 0.1 / n, 1e4 / n)
    st0, part0 = initialize_path(problem)
    result = trace(problem, st0, part0, e, b_cap=b_cap)
    for seg in result.segments:
        for th in (seg.theta_start, 0.5 * (seg.theta_start + seg.theta_end), seg.theta_end):
            assert check_relaxed(seg.state_at(th), seg.partition, seg.tol, y).passed
    for r in result.records[:-1]:
        assert r.consistency_error <= 1e-8
        assert r.noncycling_violation <= 1e-9
