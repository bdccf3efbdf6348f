from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svmpath.errors import InputError
from svmpath.partition import (INSIDE, KKT_SLACK, MARGIN, OUTSIDE, Partition, Tolerances, check_exact,
                               check_relaxed, partition_difference)
from svmpath.state import PathState


def state(yf, alpha, c):
    yf, alpha, c = (np.asarray(v, dtype=float) for v in (yf, alpha, c))
    return PathState(0.0, 0.0, alpha, c, yf)


# per-index examples; the equality residual is not under test here
Y = np.array([1.0, 1.0])


def test_from_sets_rejects_overlap_and_gaps():
    with pytest.raises(InputError):
        Partition.from_sets(3, outside=[0, 1], margin=[1], inside=[2])
    with pytest.raises(InputError):
        Partition.from_sets(3, outside=[0], margin=[1])
    p = Partition.from_sets(4, outside=[3, 0], margin=[2], inside=[1])
    np.testing.assert_array_equal(p.outside, [0, 3])
    assert p.sizes() == (2, 1, 1)


def test_partition_rejects_unknown_codes():
    with pytest.raises(InputError):
        Partition([0, 1, 5])


def test_exact_outside_interior_point():
    st_ = state([1.2, 1.5], [0.0, 0.0], [1.0, 1.0])
    rep = check_exact(st_, Partition([OUTSIDE, OUTSIDE]), Y)
    assert rep.passed and rep.worst == 0.0


def test_exact_margin_output_violation_reported_unslacked_with_zero_slack():
    st_ = state([1.0 + 1e-3, 1.5], [0.3, 0.0], [1.0, 1.0])
    rep = check_exact(st_, Partition([MARGIN, OUTSIDE]), np.array([1.0, -1.0]), slack=0.0)
    assert rep.output_violation[0] == pytest.approx(1e-3, rel=1e-9)
    assert not rep.passed


def test_exact_inside_multiplier_violation():
    st_ = state([0.5, 1.5], [0.99, 0.0], [1.0, 1.0])
    rep = check_exact(st_, Partition([INSIDE, OUTSIDE]), Y, slack=0.0)
    assert rep.multiplier_violation[0] == pytest.approx(0.01, rel=1e-9)


def test_relaxed_outside_may_dip_below_zero():
    st_ = state([1.5, 1.5], [-0.03, 0.0], [1.0, 1.0])
    rep = check_relaxed(st_, Partition([OUTSIDE, OUTSIDE]), Tolerances(0.0, 0.05), Y)
    assert rep.multiplier_violation[0] == 0.0


def test_relaxed_inside_output_violation():
    eps1 = 0.1
    st_ = state([1.0 + 2 * eps1, 1.5], [1.0, 0.0], [1.0, 1.0])
    rep = check_relaxed(st_, Partition([INSIDE, OUTSIDE]), Tolerances(eps1, 0.0), Y, slack=0.0)
    assert rep.output_violation[0] == pytest.approx(eps1, rel=1e-12)


def test_equality_residual_reported():
    st_ = state([1.5, 1.5], [0.0, 0.0], [1.0, 1.0])
    st_.alpha[:] = [0.2, 0.1]
    rep = check_relaxed(st_, Partition([MARGIN, MARGIN]), Tolerances(1.0, 1.0), np.array([1.0, -1.0]))
    assert rep.equality_residual == pytest.approx(0.1)
    assert not rep.passed


def test_tolerances_validation_and_relative():
    with pytest.raises(InputError):
        Tolerances(-1.0, 0.0)
    t = Tolerances.relative(0.1, np.array([2.0, 5.0]))
    assert (t.eps1, t.eps2) == (0.1, 0.5)
    assert Tolerances().exact


def test_partition_difference_examples():
    a = Partition([0, 1, 2, 0])
    assert partition_difference(a, a) == 0.0
    assert partition_difference(a, Partition([1, 2, 0, 1])) == 1.0
    assert partition_difference(a, Partition([0, 1, 2, 2])) == 0.25
    with pytest.raises(InputError):
        partition_difference(a, Partition([0, 1]))


codes = st.lists(st.sampled_from([OUTSIDE, MARGIN, INSIDE]), min_size=1, max_size=15)


@st.composite
def random_states(draw):
    lab = np.array(draw(codes), dtype=np.int8)
    n = lab.size
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.1, 3.0, n)
    alpha = np.where(lab == OUTSIDE, 0.0, np.where(lab == INSIDE, c, rng.uniform(0, 1, n) * c))
    # perturb some entries so both passing and failing cases occur
    noise = rng.standard_normal(n) * rng.choice([0.0, 1e-12, 1e-3], n)
    yf = np.where(lab == OUTSIDE, 1.0 + np.abs(rng.standard_normal(n)),
                  np.where(lab == INSIDE, 1.0 - np.abs(rng.standard_normal(n)), 1.0)) + noise
    alpha = alpha + rng.standard_normal(n) * rng.choice([0.0, 1e-12, 1e-3], n)
    y = rng.choice([-1.0, 1.0], n)
    return PathState(0.0, 0.0, alpha, c, yf), Partition(lab), y


@settings(max_examples=200, deadline=None)
@given(random_states())
def test_zero_tolerance_matches_exact(sample):
    st_, part, y = sample
    a = check_relaxed(st_, part, Tolerances(0.0, 0.0), y)
    b = check_exact(st_, part, y)
    assert a.passed == b.passed
    np.testing.assert_array_equal(a.output_violation, b.output_violation)
    np.testing.assert_array_equal(a.multiplier_violation, b.multiplier_violation)


@settings(max_examples=200, deadline=None)
@given(random_states(), st.floats(0, 1), st.floats(0, 1))
def test_relaxing_never_adds_violations(sample, e1, e2):
    st_, part, y = sample
    exact = check_exact(st_, part, y)
    relaxed = check_relaxed(st_, part, Tolerances(e1, e2), y)
    assert np.all(relaxed.output_violation <= exact.output_violation)
    assert np.all(relaxed.multiplier_violation <= exact.multiplier_violation)


@settings(max_examples=200, deadline=None)
@given(codes.flatmap(lambda a: st.tuples(st.just(a), st.lists(st.sampled_from([0, 1, 2]), min_size=len(a),
                                                               max_size=len(a)))))
def test_partition_difference_is_a_metric(pair):
    a, b = Partition(pair[0]), Partition(pair[1])
    dab = partition_difference(a, b)
    assert dab == partition_difference(b, a)
    assert (dab == 0.0) == (a == b)
    assert 0.0 <= dab <= 1.0
    assert round(dab * a.n) == dab * a.n
