import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridsim import (
    GridMeasure,
    GridMismatchError,
    HybridState,
    MarginalMeasure,
    coarsen,
    embedded_step,
    empirical_measure,
    invariance_report,
    marginalize,
    phase_family,
    pushforward,
    total_variation,
)
from hybridsim.measure import bin_index, cell_centers

REFINE = 16
E1 = math.exp(-1.0)


@pytest.fixture(scope="module")
def family(linear):
    phases = [k / 6 for k in range(6)]
    fam = phase_family(linear, linear.initial, phases, 1000, 200_000, seed=0, n_chains=1000, refine=REFINE)
    return fam


@pytest.fixture(scope="module")
def mu0(family):
    return family[0]


def test_bin_index_edges():
    box = np.array([[-1.0, 1.0]])
    x = np.array([[-1.0], [-0.9999], [0.0], [0.99], [1.0], [1.0001], [-1.5], [np.nan]])
    assert bin_index(box, (4,), x).tolist() == [0, 0, 2, 3, 3, -1, -1, -1]
    box2 = np.array([[0.0, 2.0], [0.0, 1.0]])
    assert bin_index(box2, (2, 4), np.array([[1.5, 0.1], [0.5, 0.9]])).tolist() == [4, 3]


def test_total_variation_examples():
    box, bins = [[0.0, 1.0]], (4,)
    a = GridMeasure(box, bins, [[0.25, 0.25, 0.25, 0.25]])
    assert total_variation(a, a) == 0.0
    p = GridMeasure(box, bins, [[1.0, 0, 0, 0]])
    q = GridMeasure(box, bins, [[0, 0, 0, 1.0]])
    assert total_variation(p, q) == 1.0
    two = GridMeasure(box, bins, [[0.5, 0.5, 0, 0]])
    assert total_variation(two, p) == 0.5
    out = GridMeasure(box, bins, [[0.0, 0, 0, 0]], overflow=1.0)
    assert total_variation(out, p) == 1.0


def test_total_variation_mismatch():
    a = GridMeasure([[0.0, 1.0]], (4,), np.full((1, 4), 0.25))
    with pytest.raises(GridMismatchError):
        total_variation(a, GridMeasure([[0.0, 1.0]], (2,), np.full((1, 2), 0.5)))
    with pytest.raises(GridMismatchError):
        total_variation(a, GridMeasure([[0.0, 2.0]], (4,), np.full((1, 4), 0.25)))
    with pytest.raises(GridMismatchError):
        total_variation(a, GridMeasure([[0.0, 1.0]], (4,), np.full((2, 4), 0.125)))
    with pytest.raises(GridMismatchError):
        total_variation(a, marginalize(a))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.integers(1, 12), st.data())
def test_total_variation_is_a_metric_on_probabilities(n_states, n_bins, data):
    def draw():
        w = np.array(data.draw(st.lists(st.floats(0, 1), min_size=n_states * n_bins + 1, max_size=n_states * n_bins + 1)))
        w[0] += 1e-3
        w /= w.sum()
        return GridMeasure([[0.0, 1.0]], (n_bins,), w[1:].reshape(n_states, n_bins), w[0])

    a, b, c = draw(), draw(), draw()
    ab = total_variation(a, b)
    assert 0 <= ab <= 1 + 1e-12
    assert ab == pytest.approx(total_variation(b, a))
    assert total_variation(a, c) <= ab + total_variation(b, c) + 1e-12


def test_marginalize_examples():
    box, bins = [[0.0, 1.0]], (3,)
    one = GridMeasure(box, bins, [[0.0, 0.0, 0.0], [0.2, 0.5, 0.3]])
    assert marginalize(one).weights.tolist() == [0.2, 0.5, 0.3]
    halves = GridMeasure(box, bins, np.full((2, 3), 1 / 6))
    m = marginalize(halves)
    assert isinstance(m, MarginalMeasure)
    assert np.allclose(m.weights, 1 / 3)
    assert m.total_mass() == pytest.approx(1.0, abs=1e-15)


def test_empirical_identity_chain(linear_identity):
    mu = empirical_measure(linear_identity, HybridState([2.0], 0), 0.0, burn_in=60, n_samples=1000)
    target = bin_index(mu.box, mu.bins, np.array([[1.0]]))[0]
    assert mu.sheets[0, target] == 1.0
    assert mu.total_mass() == 1.0


def test_single_sample_is_an_atom(linear):
    mu = empirical_measure(linear, linear.initial, 0.3, burn_in=5, n_samples=1, n_chains=1000)
    assert np.count_nonzero(mu.sheets) == 1
    assert mu.total_mass() == 1.0


def test_empirical_state_masses(mu0):
    assert np.all(np.abs(mu0.state_masses() - [5 / 11, 6 / 11]) <= 0.01)
    mu0.check()


def test_integer_time_gap(mu0):
    coarse = coarsen(mu0, REFINE)
    w = coarse.widths()[0]
    centers = coarse.centers()[:, 0]
    lo, hi = -(1 - 2 * E1), 1 - 2 * E1
    inner = (centers - w / 2 > lo) & (centers + w / 2 < hi)
    assert inner.any()
    assert marginalize(coarse).weights[inner].sum() == 0.0


def test_marginal_support_is_bimodal(mu0):
    m = marginalize(coarsen(mu0, REFINE))
    c = m.centers()[:, 0]
    w = m.weights
    support = c[w > 0]
    assert support.min() >= -1.0 - 0.03 and support.max() <= 1.0 + 0.03
    assert w[c < 0].sum() > 0.3 and w[c > 0].sum() > 0.3


def test_phase_family_singleton_matches_empirical(linear):
    a = phase_family(linear, linear.initial, [0.4], 50, 3000, seed=2, n_chains=10)[0]
    b = empirical_measure(linear, linear.initial, 0.4, 50, 3000, seed=2, n_chains=10)
    assert np.array_equal(a.sheets, b.sheets)
    assert a.t0 == 0.4


def test_phase_family_rejects_bad_phase(linear):
    with pytest.raises(ValueError):
        phase_family(linear, linear.initial, [0.0, 1.0], 10, 10)


def test_phase_family_support_drifts(family):
    # centers of mass of the nonnegative branch move continuously through the phases
    means = []
    for mu in family:
        m = marginalize(coarsen(mu, REFINE))
        c = m.centers()[:, 0]
        means.append(float((np.abs(c) * m.weights).sum()))
    assert np.max(np.abs(np.diff(means))) < 0.2
    assert len(set(np.round(means, 3))) == len(means)


def test_pushforward_identity(mu0, linear):
    out = pushforward(linear, mu0, 0.0)
    assert np.array_equal(out.sheets, mu0.sheets) and out.t0 == mu0.t0


def test_pushforward_point_mass(linear):
    box, bins = linear.box, linear.bins
    centers = cell_centers(box, bins)[:, 0]
    x = centers[150]
    mu = GridMeasure.point_mass(box, bins, HybridState([x], 1), 2)
    out = pushforward(linear, mu, 1.0, subdivisions=1)
    for y, p in embedded_step(linear, HybridState([x], 1), 0.0):
        cell = bin_index(box, bins, y.x[None])[0]
        assert out.sheets[y.state, cell] == pytest.approx(p, abs=1e-15)
    assert np.count_nonzero(out.sheets) == 2


def test_pushforward_point_mass_cstr(cstr):
    centers = cell_centers(cstr.box, cstr.bins)
    y = HybridState(centers[4242], 2)
    mu = GridMeasure.point_mass(cstr.box, cstr.bins, y, 3)
    out = pushforward(cstr, mu, 1.0, subdivisions=1)
    for yy, p in embedded_step(cstr, y, 0.0):
        cell = bin_index(cstr.box, cstr.bins, yy.x[None])[0]
        assert out.sheets[yy.state].reshape(-1)[cell] == pytest.approx(p, abs=1e-15)


@pytest.mark.parametrize("t", [0.3, 1.0, 2.7, 10.0])
def test_pushforward_conserves_mass(mu0, linear, t):
    out = pushforward(linear, mu0, t)
    assert out.total_mass() == pytest.approx(1.0, abs=1e-9)
    assert marginalize(out).total_mass() == pytest.approx(1.0, abs=1e-9)
    assert out.overflow < 1e-6
    assert out.t0 == pytest.approx(t % 1.0, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 10), st.integers(0, 10_000))
def test_pushforward_conserves_mass_any_measure(linear, t, seed):
    rng = np.random.default_rng(seed)
    w = rng.random((2, 200)) * (rng.random((2, 200)) < 0.2)
    w /= w.sum() + 0.1
    mu = GridMeasure(linear.box, linear.bins, w, 1 - w.sum())
    out = pushforward(linear, mu, t)
    assert out.total_mass() == pytest.approx(1.0, abs=1e-9)
    assert out.overflow >= mu.overflow - 1e-15


def test_pushforward_overflow_not_clamped(linear):
    mu = GridMeasure.point_mass(linear.box, linear.bins, HybridState([2.9], 0), 2)
    narrow = GridMeasure.point_mass([[2.5, 3.0]], (10,), HybridState([2.9], 0), 2)
    out = pushforward(linear, narrow, 1.0)
    assert out.overflow == pytest.approx(1.0)
    assert pushforward(linear, mu, 1.0).overflow == 0.0


def test_pushforward_semigroup_whole_periods(mu0, linear):
    a = pushforward(linear, pushforward(linear, mu0, 2.0), 1.0)
    b = pushforward(linear, mu0, 3.0)
    assert total_variation(a, b) <= 1e-6


@pytest.mark.parametrize("a,b", [(0.5, 0.7), (0.3, 0.3), (0.5, 0.5)])
def test_pushforward_semigroup_fractional(mu0, linear, a, b):
    x = pushforward(linear, pushforward(linear, mu0, a), b)
    y = pushforward(linear, mu0, a + b)
    assert x.t0 == pytest.approx(y.t0)
    assert total_variation(coarsen(x, REFINE), coarsen(y, REFINE)) <= 0.02


def test_invariance_small_sample(family, linear):
    for mu in family:
        assert invariance_report(linear, mu, REFINE) <= 0.05


def test_pushforward_between_phases(family, linear):
    pushed = pushforward(linear, family[0], 1 / 6)
    assert pushed.t0 == pytest.approx(family[1].t0)
    assert total_variation(coarsen(pushed, REFINE), coarsen(family[1], REFINE)) <= 0.05


def test_coarsen_preserves_mass(mu0):
    for f in (1, 2, 4, 16):
        c = coarsen(mu0, f)
        assert c.bins == (mu0.bins[0] // f,)
        assert c.total_mass() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(GridMismatchError):
        coarsen(mu0, 7)


def test_cstr_measure_stays_in_box(cstr):
    mu = empirical_measure(cstr, cstr.initial, 0.5, 20, 5000, seed=1, n_chains=500, refine=2)
    out = pushforward(cstr, mu, 1.0)
    assert mu.overflow < 1e-6 and out.overflow < 1e-6
    assert out.total_mass() == pytest.approx(1.0, abs=1e-9)
    assert np.all(np.abs(out.state_masses() - [0.3, 0.3, 0.4]) <= 1e-12)


def test_measure_check_flags_bad_mass(linear):
    bad = GridMeasure(linear.box, linear.bins, np.zeros((2, 200)))
    with pytest.raises(ValueError):
        bad.check()
