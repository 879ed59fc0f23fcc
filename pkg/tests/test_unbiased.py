import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from unbiased_sde.models import DiscountedCall, Problem, Scheme, cir, frozen, gbm, simulate_level_terminals
from unbiased_sde.streams import derive_substream
from unbiased_sde.unbiased import (
    DivergentWorkError, LevelDistribution, UnbiasedSampler, estimate_strong_order,
    level_count_from_uniform, sample_level_count, sample_Z, validate_gamma,
)

GBM_M = Problem(gbm(), Scheme.MILSTEIN)


def test_tail_prob_values():
    d = LevelDistribution(1.5)
    assert d.tail_prob(1) == 1.0
    assert LevelDistribution(3.7).tail_prob(1) == 1.0
    assert d.tail_prob(2) == pytest.approx(0.3535534, abs=1e-7)
    assert d.tail_prob(3) == 0.125
    with pytest.raises(ValueError):
        d.tail_prob(0)


@given(st.floats(0.01, 10), st.integers(1, 60))
def test_tail_prob_geometric(gamma, i):
    d = LevelDistribution(gamma)
    assert 0 < d.tail_prob(i + 1) < d.tail_prob(i) <= 1
    assert d.tail_prob(i + 1) / d.tail_prob(i) == pytest.approx(2.0**-gamma, rel=1e-12)


def test_level_from_uniform_examples():
    assert level_count_from_uniform(0.9, 1.5) == 1
    assert level_count_from_uniform(0.1, 1.5) == 3


@given(st.floats(1e-300, 1.0, exclude_max=True), st.floats(0.2, 5))
def test_level_from_uniform_is_inverse_tail(u, gamma):
    n = level_count_from_uniform(u, gamma)
    d = LevelDistribution(gamma)
    assert n >= 1
    if n < 40:
        assert d.tail_prob(n + 1) < u * (1 + 1e-12)
        assert u <= d.tail_prob(n) * (1 + 1e-12)


def test_level_count_distribution():
    d = LevelDistribution(1.5)
    n = 100_000
    levels = np.array([sample_level_count(d, derive_substream(77, i)) for i in range(n)])
    p2 = d.tail_prob(2)
    assert abs(np.mean(levels >= 2) - p2) < 4 * math.sqrt(p2 * (1 - p2) / n)
    probs = [d.tail_prob(i) - d.tail_prob(i + 1) for i in (1, 2, 3)] + [d.tail_prob(4)]
    observed = [np.sum(levels == 1), np.sum(levels == 2), np.sum(levels == 3), np.sum(levels >= 4)]
    assert stats.chisquare(observed, n * np.array(probs)).pvalue > 0.01


def test_expected_work():
    assert LevelDistribution(1.5).expected_work() == pytest.approx(4.414214, abs=1e-6)
    assert LevelDistribution(200.0).expected_work() == pytest.approx(2.0)
    with pytest.raises(DivergentWorkError):
        LevelDistribution(1.0).expected_work()


def test_validate_gamma():
    assert validate_gamma(1.5, 1.0).ok
    bad_var = validate_gamma(1.5, 0.5)
    assert not bad_var.ok and "2r" in bad_var.violations[0]
    bad_work = validate_gamma(0.9, 1.0)
    assert not bad_work.ok and "<= 1" in bad_work.violations[0]
    assert validate_gamma(1.5, 1.0).default_gamma == 1.5
    assert validate_gamma(1.2, 0.8).default_gamma == pytest.approx(1.3)


def test_frozen_z_is_x0():
    problem = Problem(frozen(0.7), Scheme.MILSTEIN)
    d = LevelDistribution(1.5)
    for sid in range(200):
        z = sample_Z(problem, d, derive_substream(1, sid))
        assert z.value == 0.7 and np.all(z.deltas == 0)


def test_single_level_z_is_level_one_value():
    d = LevelDistribution(1.5)
    hits = 0
    for sid in range(50):
        z = sample_Z(GBM_M, d, derive_substream(2, sid))
        if z.level_count == 1:
            ks, _ = simulate_level_terminals(derive_substream(2, sid), GBM_M, 1)
            assert z.value == ks[0] + (ks[1] - ks[0])
            assert z.value == pytest.approx(ks[1], abs=1e-15)
            hits += 1
    assert hits > 10


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**63), st.integers(0, 2**40), st.sampled_from([1.1, 1.5, 1.9]))
def test_z_telescoping_and_work(seed, sid, gamma):
    d = LevelDistribution(gamma)
    z = sample_Z(Problem(cir(), Scheme.MILSTEIN), d, derive_substream(seed, sid))
    assert z.work == 2**z.level_count
    assert len(z.deltas) == z.level_count
    assert z.recompute(d) == z.value


def test_batch_kernel_matches_object_path():
    d = LevelDistribution(1.5)
    problem = Problem(gbm(), Scheme.MILSTEIN, DiscountedCall())
    values, levels, works = UnbiasedSampler(problem, d, 8, first_id=1000).batch(0, 300)
    for i in range(300):
        z = sample_Z(problem, d, derive_substream(8, 1000 + i))
        assert (z.value, z.level_count, z.work) == (values[i], levels[i], works[i])


def test_z_mean_matches_gbm_mean():
    values, _, works = UnbiasedSampler(GBM_M, LevelDistribution(1.5), 31).batch(0, 100_000)
    se = values.std(ddof=1) / math.sqrt(values.size)
    assert abs(values.mean() - math.exp(0.05)) < 4 * se


def test_z_mean_matches_cir_mean():
    values, _, _ = UnbiasedSampler(Problem(cir(), Scheme.MILSTEIN), LevelDistribution(1.5), 32).batch(0, 100_000)
    se = values.std(ddof=1) / math.sqrt(values.size)
    assert abs(values.mean() - 0.04) < 4 * se


def test_variance_stabilises_for_milstein():
    values, _, _ = UnbiasedSampler(GBM_M, LevelDistribution(1.5), 33).batch(0, 100_000)
    ratio = values[:50_000].var(ddof=1) / values.var(ddof=1)
    assert 0.7 <= ratio <= 1.4
    assert not validate_gamma(1.5, Scheme.EULER.strong_order).ok


def test_mean_work_near_analytic():
    d = LevelDistribution(1.5)
    _, _, works = UnbiasedSampler(GBM_M, d, 34).batch(0, 100_000)
    assert abs(works.mean() / d.expected_work() - 1) < 0.05


@pytest.mark.parametrize("scheme,lo,hi", [(Scheme.MILSTEIN, 0.85, 1.15), (Scheme.EULER, 0.35, 0.65)])
def test_strong_order(scheme, lo, hi):
    est = estimate_strong_order(Problem(gbm(), scheme), range(1, 7), 10_000, master_seed=40)
    assert est.estimable and lo <= est.order <= hi
    assert est.mean_sq_deltas.shape == (6,)


def test_strong_order_frozen_not_estimable():
    est = estimate_strong_order(Problem(frozen(), Scheme.MILSTEIN), range(1, 5), 1000)
    assert not est.estimable and "not estimable" in est.describe()


def test_strong_order_input_guards():
    with pytest.raises(ValueError):
        estimate_strong_order(GBM_M, range(1, 4), 10_000)
    with pytest.raises(ValueError):
        estimate_strong_order(GBM_M, range(1, 7), 100)
