import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from bnpeb.model import (CsvFormatError, Dataset, DiscreteMixingMeasure, GaussianMixtureDensity,
                         TruncatedNormalParams, UniformBase, block_marginal_likelihood, log_uniform_base_marginal,
                         truncated_normal_mean, truncated_normal_sample, uniform_base_marginal)
from bnpeb.quadrature import simpson_grid

# Independent oracles (scipy adaptive quad), frozen.
UBM_UNIT = 0.341344746068543          # z=0 on [-1, 1]
UBM_WIDE = 0.05000000000000002        # z=0 on [-10, 10]
BML_PAIR = 0.01289076137023704        # zs=(0.3, -0.3) on [-10, 10]
BML_TRIPLE = 0.004594407461848269     # zs=(1, 1, 1) on [-10, 10]
TN_MEAN_23 = 2.3158213267437806       # u=0, tau=1, [2, 3]
TN_MEAN_5 = 4.999998513280061         # u=5, tau=1, [-10, 10]

BASE = UniformBase()


def _quad(f, a, b):
    return integrate.quad(f, a, b, epsabs=1e-15, epsrel=1e-13, limit=200)[0]


# ---- DiscreteMixingMeasure ----------------------------------------------

def test_measure_validation():
    with pytest.raises(ValueError):
        DiscreteMixingMeasure([], [])
    with pytest.raises(ValueError):
        DiscreteMixingMeasure([0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        DiscreteMixingMeasure([0.0], [1.0 + 1e-9])
    with pytest.raises(ValueError):
        DiscreteMixingMeasure([np.inf], [1.0])
    with pytest.raises(ValueError):
        DiscreteMixingMeasure([0.0, 1.0], [1.5, -0.5])
    with pytest.raises(ValueError):
        DiscreteMixingMeasure([0.0, 4.0], [0.5, 0.5], support_bound=3.0)
    with pytest.raises(ValueError):
        DiscreteMixingMeasure.from_unnormalized([0.0, 1.0], [0.0, 0.0])


@given(st.lists(st.tuples(st.floats(-20, 20), st.floats(1e-6, 10)), min_size=1, max_size=12))
def test_measure_normalizes(pairs):
    atoms, w = zip(*pairs)
    g = DiscreteMixingMeasure.from_unnormalized(atoms, w)
    assert abs(g.weights.sum() - 1) <= 1e-12
    assert np.all(g.weights >= 0)


def test_measure_csv_roundtrip(tmp_path):
    g = DiscreteMixingMeasure.from_unnormalized([-1.25, 0.1, 7.0], [1, 2, 3])
    path = tmp_path / "g.csv"
    g.to_csv(path)
    assert path.read_text().splitlines()[0] == "atom,weight"
    h = DiscreteMixingMeasure.from_csv(path)
    assert np.array_equal(g.atoms, h.atoms) and np.array_equal(g.weights, h.weights)


def test_mass_within_and_radius():
    g = DiscreteMixingMeasure([-2.0, 0.01, 3.0], [0.2, 0.5, 0.3])
    assert g.mass_within(0.0, 0.02) == pytest.approx(0.5)
    assert g.radius == 3.0


# ---- GaussianMixtureDensity ---------------------------------------------

def test_mixture_density_matches_scipy(rng):
    g = DiscreteMixingMeasure.from_unnormalized(rng.normal(size=5) * 3, rng.random(5))
    f = GaussianMixtureDensity(g)
    z = np.linspace(-12, 12, 101)
    ref = sum(w * stats.norm.pdf(z - a) for a, w in zip(g.atoms, g.weights))
    dref = sum(-w * (z - a) * stats.norm.pdf(z - a) for a, w in zip(g.atoms, g.weights))
    assert np.allclose(f.pdf(z), ref, rtol=1e-13, atol=0)
    assert np.allclose(f.dpdf(z), dref, rtol=1e-12, atol=1e-300)


# ---- uniform base closed forms ------------------------------------------

def test_uniform_base_marginal_examples():
    assert uniform_base_marginal(0.0, UniformBase(-1, 1)) == pytest.approx(UBM_UNIT, rel=1e-13)
    assert uniform_base_marginal(0.0, BASE) == pytest.approx(UBM_WIDE, rel=1e-13)
    # the frozen values come from this oracle
    assert _quad(lambda m: stats.norm.pdf(m) / 2, -1, 1) == pytest.approx(UBM_UNIT, rel=1e-12)


def test_uniform_base_marginal_errors():
    with pytest.raises(ValueError):
        uniform_base_marginal(np.nan, BASE)
    with pytest.raises(ValueError):
        uniform_base_marginal(0.0, BASE, sigma=0.0)
    with pytest.raises(ValueError):
        UniformBase(1.0, 1.0)


@given(st.floats(-30, 30), st.floats(0.1, 15), st.floats(0.2, 3))
def test_uniform_base_marginal_symmetric(z, b, sigma):
    base = UniformBase(-b, b)
    assert uniform_base_marginal(z, base, sigma) == pytest.approx(uniform_base_marginal(-z, base, sigma), rel=1e-13)
    # positivity holds in log space; the linear value may underflow far out
    assert np.isfinite(log_uniform_base_marginal(z, base, sigma))
    if abs(z) < b + 30 * sigma:
        assert uniform_base_marginal(z, base, sigma) > 0


@pytest.mark.parametrize("base,sigma", [(UniformBase(), 1.0), (UniformBase(-1, 1), 1.0), (UniformBase(2, 2.5), 0.5)])
def test_uniform_base_marginal_integrates_to_one(base, sigma):
    x, w = simpson_grid(base.lower - 12 * sigma, base.upper + 12 * sigma, 0.005)
    total = np.sum(w * np.array([uniform_base_marginal(v, base, sigma) for v in x]))
    assert abs(total - 1) < 1e-8


def test_block_marginal_examples():
    assert block_marginal_likelihood([0.0], UniformBase(-1, 1)) == pytest.approx(UBM_UNIT, rel=1e-14)
    assert block_marginal_likelihood([0.3, -0.3], BASE) == pytest.approx(BML_PAIR, rel=1e-10)
    assert block_marginal_likelihood([1.0, 1.0, 1.0], BASE) == pytest.approx(BML_TRIPLE, abs=1e-10)
    with pytest.raises(ValueError):
        block_marginal_likelihood([], BASE)


@given(st.lists(st.floats(-6, 6), min_size=1, max_size=6), st.floats(-3, 0), st.floats(0.5, 4))
def test_block_marginal_matches_quadrature(zs, a, width):
    base = UniformBase(a, a + width)
    zs = np.array(zs)

    def integrand(m):
        return np.prod(stats.norm.pdf(zs - m)) / base.width

    # a peaked integrand needs the quadrature pointed at its mode
    ref = integrate.quad(integrand, base.lower, base.upper, points=[np.clip(zs.mean(), base.lower, base.upper)],
                         epsabs=0, epsrel=1e-12, limit=500)[0]
    got = block_marginal_likelihood(zs, base)
    if ref > 1e-280:
        assert got == pytest.approx(ref, rel=1e-8)


# ---- truncated normal ---------------------------------------------------

def test_tn_mean_examples():
    assert truncated_normal_mean(TruncatedNormalParams(0, 1, -1, 1)) == pytest.approx(0, abs=1e-15)
    assert truncated_normal_mean(TruncatedNormalParams(5, 1, -10, 10)) == pytest.approx(TN_MEAN_5, abs=1e-10)
    assert abs(truncated_normal_mean(TruncatedNormalParams(5, 1, -10, 10)) - 5) < 1e-5
    m = truncated_normal_mean(TruncatedNormalParams(0, 1, 2, 3))
    assert 2 < m < 3 and m == pytest.approx(TN_MEAN_23, abs=1e-8)


def test_tn_mean_extreme_tail():
    m = truncated_normal_mean(TruncatedNormalParams(0, 1, 50, 51))
    assert 50 < m < 51 and np.isfinite(m)


def test_tn_params_validation():
    for args in [(0, 0, -1, 1), (0, 1, 1, 1), (np.nan, 1, -1, 1)]:
        with pytest.raises(ValueError):
            TruncatedNormalParams(*args)


@pytest.mark.parametrize("p", [TruncatedNormalParams(0, 1, -1, 1), TruncatedNormalParams(0, 1, 2, 3),
                               TruncatedNormalParams(3, 0.25, -10, 10), TruncatedNormalParams(0, 1, 6, 7)])
def test_tn_density_integrates(p):
    x, w = simpson_grid(p.lower, p.upper, (p.upper - p.lower) / 4000)
    assert abs(np.sum(w * p.pdf(x)) - 1) < 1e-9


def test_tn_sample_ks_and_mean():
    p = TruncatedNormalParams(0, 1, -10, 10)
    x = truncated_normal_sample(p, np.random.default_rng(1), size=100_000)
    assert abs(x.mean()) < 0.02
    assert stats.kstest(x, p.cdf).statistic < 0.01

    p = TruncatedNormalParams(0, 1, 2, 3)
    x = truncated_normal_sample(p, np.random.default_rng(2), size=100_000)
    assert np.all((x >= 2) & (x <= 3))
    assert abs(x.mean() - truncated_normal_mean(p)) < 0.01
    assert stats.kstest(x, p.cdf).statistic < 0.01


def test_tn_sample_narrow_and_deterministic():
    p = TruncatedNormalParams(0, 1, 0.999, 1.001)
    x = truncated_normal_sample(p, np.random.default_rng(3), size=1000)
    assert np.all((x >= 0.999) & (x <= 1.001))
    a = truncated_normal_sample(p, np.random.default_rng(9), size=50)
    b = truncated_normal_sample(p, np.random.default_rng(9), size=50)
    assert np.array_equal(a, b)
    assert truncated_normal_sample(TruncatedNormalParams(0, 1, -10, 10), np.random.default_rng(4)) == \
        truncated_normal_sample(TruncatedNormalParams(0, 1, -10, 10), np.random.default_rng(4))


# ---- Dataset and CSV ----------------------------------------------------

def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset([])
    with pytest.raises(ValueError):
        Dataset([0.0, np.nan])


def test_dataset_csv_roundtrip(tmp_path):
    d = Dataset([0.1, -2.0 / 3.0, 1e-17, 12345.678])
    path = tmp_path / "z.csv"
    d.to_csv(path)
    assert np.array_equal(Dataset.from_csv(path).z, d.z)


@pytest.mark.parametrize("text,msg", [("x\n1\n", "header"), ("z\n1\nabc\n", "non-numeric"), ("", "empty"),
                                      ("z\n1,2\n", "cells")])
def test_csv_errors(text, msg):
    with pytest.raises(CsvFormatError, match=msg):
        Dataset.from_csv(io.StringIO(text))
