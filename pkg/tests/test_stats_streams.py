import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from invade_tree.errors import TooFewSamplesError
from invade_tree.stats import McEstimate, binomial_se, chi2_two_sample, ks_test, linear_fit
from invade_tree.streams import derive_seed, open_uniform, parse_seed, stream, stream_id


def _expcdf(rate):
    return lambda x: 1 - np.exp(-rate * x)


def test_ks_matches_scipy():
    x = np.random.default_rng(0).exponential(size=500)
    r = ks_test(x, _expcdf(1.0))
    ref = sps.kstest(x, "expon", method="asymp")
    assert r.statistic == pytest.approx(ref.statistic)
    assert r.p_value == pytest.approx(ref.pvalue, rel=1e-6)


def test_ks_calibrated_at_one_percent():
    rng = np.random.default_rng(1)
    trials = 2000
    rej = sum(not ks_test(rng.exponential(size=200), _expcdf(1.0)).passes(0.01) for _ in range(trials))
    # asymptotic p-values are slightly conservative at n = 200
    assert abs(rej / trials - 0.01) < 3 * np.sqrt(0.01 * 0.99 / trials) + 0.003


def test_ks_power_and_degenerate_samples():
    rng = np.random.default_rng(2)
    assert ks_test(rng.exponential(0.5, size=1000), _expcdf(1.0)).p_value < 1e-3
    assert ks_test(np.full(100, 0.3), lambda x: x).p_value < 1e-10
    with pytest.raises(TooFewSamplesError):
        ks_test(np.arange(5.0), lambda x: x)


def test_chi2_homogeneity():
    rng = np.random.default_rng(3)
    same = chi2_two_sample(rng.poisson(3, 2000), rng.poisson(3, 3000))
    diff = chi2_two_sample(rng.poisson(3, 2000), rng.poisson(3.4, 3000))
    assert same.passes(0.001)
    assert diff.p_value < 1e-3
    assert same.dof >= 5
    # a single pooled cell carries no information
    assert chi2_two_sample(np.zeros(30), np.zeros(40)).p_value == 1.0
    with pytest.raises(TooFewSamplesError):
        chi2_two_sample([1, 2], np.arange(50))


def test_mc_estimate():
    e = McEstimate.from_samples([1.0, 2.0, 3.0, 4.0])
    assert e.mean == 2.5
    assert e.se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    assert e.within(2.5 + 2 * e.se) and not e.within(2.5 + 4 * e.se)
    assert e.within(2.5 + 4 * e.se, allowance=e.se)
    assert e.z(2.5) == 0
    vec = McEstimate.from_samples(np.arange(12.0).reshape(6, 2))
    assert vec.mean.shape == (2,)
    with pytest.raises(TooFewSamplesError):
        McEstimate.from_samples([1.0])


def test_binomial_se_and_weighted_fit():
    assert binomial_se(0.5, 100) == pytest.approx(0.05)
    x = np.arange(1.0, 6.0)
    f = linear_fit(x, 2 * x + 1, se=np.ones(5))
    assert f.slope == pytest.approx(2) and f.intercept == pytest.approx(1)


@pytest.mark.parametrize("text,value", [("31", 31), ("0x1f", 31), ("0X1F", 31), (7, 7), (" 0x5eed ", 0x5EED)])
def test_parse_seed(text, value):
    assert parse_seed(text) == value


@pytest.mark.parametrize("bad", ["-1", "0x1" + "0" * 16, "seed", ""])
def test_parse_seed_rejects(bad):
    with pytest.raises(ValueError):
        parse_seed(bad)


def test_streams_reproducible_and_distinct():
    a = stream(5, "x", 1).random(4)
    assert np.array_equal(a, stream(5, "x", 1).random(4))
    assert not np.array_equal(a, stream(5, "x", 2).random(4))
    assert not np.array_equal(a, stream(6, "x", 1).random(4))
    assert derive_seed(5, "x") == derive_seed(5, "x") != derive_seed(5, "y")
    with pytest.raises(ValueError):
        stream(5, -1)


def test_stream_ids_do_not_collide():
    ids = {stream_id(0x5EED, "experiment", e, r) for e in ("a", "b", "c") for r in range(2000)}
    assert len(ids) == 6000


@given(st.integers(0, 2**64 - 1), st.integers(0, 10**6))
def test_derived_seeds_fit_64_bits(seed, r):
    assert 0 <= derive_seed(seed, "tag", r) < 2**64


def test_open_uniform_strictly_inside():
    u = open_uniform(np.random.default_rng(0), 10**5)
    assert u.min() > 0 and u.max() < 1
    assert ks_test(u, lambda x: x).passes(0.001)
