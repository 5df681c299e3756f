import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hybridsim import (
    IndexOutOfRangeError,
    NegativeEntryError,
    NonSquareError,
    RowSumError,
    n_step_distribution,
    sample_next,
    stationary_distribution,
    validate,
)
from hybridsim.markov import sample_next_many

from conftest import IDENTITY, stationary_oracle
from hybridsim.systems import Q1, Q2


@st.composite
def transition_matrices(draw, max_size=5, positive=False):
    n = draw(st.integers(1, max_size))
    lo = 0.01 if positive else 0.0
    raw = draw(arrays(float, (n, n), elements=st.floats(lo, 1.0)))
    raw[raw.sum(axis=1) == 0, 0] = 1.0
    return raw / raw.sum(axis=1, keepdims=True)


def test_validate_accepts_q1_and_identity():
    assert np.array_equal(validate(Q1).matrix, np.array(Q1))
    assert validate(IDENTITY).size == 2


def test_validate_row_sum_error():
    with pytest.raises(RowSumError) as err:
        validate([[0.5, 0.6], [0.5, 0.5]])
    assert err.value.i == 0
    assert err.value.total == pytest.approx(1.1)


def test_validate_other_errors():
    with pytest.raises(NonSquareError):
        validate([[0.5, 0.5]])
    with pytest.raises(NegativeEntryError) as err:
        validate([[1.2, -0.2], [0.5, 0.5]])
    assert (err.value.i, err.value.j) == (0, 1)
    with pytest.raises(NonSquareError):
        validate(np.zeros((0, 0)))


def test_validate_renormalizes_within_tolerance():
    q = validate([[0.3333333333, 0.6666666667], [0.5, 0.5]])
    assert np.all(np.abs(q.matrix.sum(axis=1) - 1) < 1e-15)


def test_matrix_is_read_only():
    q = validate(Q1)
    with pytest.raises(ValueError):
        q.matrix[0, 0] = 1.0


def test_sample_next_examples():
    assert sample_next(validate(Q1), 0, 0.39) == 0
    assert sample_next(validate(Q1), 0, 0.41) == 1
    assert sample_next(validate(Q1), 0, 0.4) == 1  # strict cumsum > u
    assert sample_next(validate(Q1), 0, 0.0) == 0
    ident = validate(IDENTITY)
    for k in range(2):
        for u in (0.0, 0.5, 0.999999):
            assert sample_next(ident, k, u) == k


def test_sample_next_bad_index():
    with pytest.raises(IndexOutOfRangeError):
        sample_next(validate(Q1), 2, 0.5)


def test_sample_next_skips_zero_entries():
    q = validate([[0.0, 1.0, 0.0], [0.5, 0.0, 0.5], [0.0, 0.0, 1.0]])
    assert sample_next(q, 0, 0.0) == 1
    assert sample_next(q, 1, 0.5) == 2
    assert sample_next(q, 1, 1 - 2**-53) == 2


@settings(max_examples=30, deadline=None)
@given(transition_matrices())
def test_stratified_sampling_reproduces_rows(q):
    tm = validate(q)
    u = (np.arange(100_000) + 0.5) / 100_000
    for i in range(tm.size):
        draws = sample_next_many(tm, np.full(u.size, i), u)
        freq = np.bincount(draws, minlength=tm.size) / u.size
        assert np.max(np.abs(freq - tm.matrix[i])) <= 1e-4


@settings(max_examples=50, deadline=None)
@given(transition_matrices(), st.integers(0, 50))
def test_sample_next_many_matches_scalar(q, seed):
    tm = validate(q)
    rng = np.random.default_rng(seed)
    states = rng.integers(0, tm.size, 64)
    u = rng.random(64)
    vec = sample_next_many(tm, states, u)
    assert vec.tolist() == [sample_next(tm, int(i), float(v)) for i, v in zip(states, u)]


def test_n_step_examples():
    assert n_step_distribution(validate(Q1), [1, 0], 0).tolist() == [1.0, 0.0]
    assert np.allclose(n_step_distribution(validate(Q1), [1, 0], 1), [0.4, 0.6], atol=1e-15)
    for init in ([1, 0], [0, 1], [0.3, 0.7]):
        assert np.allclose(n_step_distribution(validate(Q2), init, 1), [0.1, 0.9], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(transition_matrices(), st.integers(0, 60), st.data())
def test_n_step_stays_a_distribution(q, n, data):
    tm = validate(q)
    w = data.draw(arrays(float, tm.size, elements=st.floats(0.0, 1.0)))
    if w.sum() == 0:
        w[0] = 1.0
    out = n_step_distribution(tm, w / w.sum(), n)
    assert np.all(out >= 0)
    assert abs(out.sum() - 1) <= 1e-12


def test_stationary_examples():
    assert np.abs(stationary_distribution(validate(Q1)) - [5 / 11, 6 / 11]).sum() <= 1e-12
    assert np.abs(stationary_distribution(validate(IDENTITY)) - [0.5, 0.5]).sum() <= 1e-12
    assert np.abs(stationary_distribution(validate(Q2)) - [0.1, 0.9]).sum() <= 1e-12


def test_stationary_periodic_chain():
    flip = validate([[0, 1], [1, 0]])
    assert np.allclose(stationary_distribution(flip), [0.5, 0.5], atol=1e-13)
    cycle = validate(np.roll(np.eye(3), 1, axis=1))
    assert np.allclose(stationary_distribution(cycle), [1 / 3] * 3, atol=1e-13)


@settings(max_examples=60, deadline=None)
@given(transition_matrices(positive=True))
def test_stationary_is_fixed_and_matches_linear_solve(q):
    tm = validate(q)
    pi = stationary_distribution(tm)
    assert np.abs(pi @ tm.matrix - pi).sum() <= 1e-10
    assert np.abs(pi - stationary_oracle(tm.matrix)).sum() <= 1e-9
    assert np.abs(n_step_distribution(tm, pi, 100) - pi).sum() <= 1e-10


@settings(max_examples=40, deadline=None)
@given(transition_matrices())
def test_stationary_fixed_for_any_chain(q):
    tm = validate(q)
    pi = stationary_distribution(tm)
    assert np.abs(pi @ tm.matrix - pi).sum() <= 1e-10
