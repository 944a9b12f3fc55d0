import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from bnpeb.model import Dataset, DiscreteMixingMeasure, GaussianMixtureDensity, MeanVector
from bnpeb.rules import (DegenerateInputError, bayes_risk, bayes_rule, compound_risk, empirical_measure,
                         james_stein, oracle_rule, regularized_rule, separable_apply, tweedie_rule)
from strategies import measures, random_measure

DELTA0 = DiscreteMixingMeasure.point_mass(0.0)
SYM = DiscreteMixingMeasure([-1.0, 1.0], [0.5, 0.5])


def two_atom_ratio(z, a, b, wa, wb):
    pa, pb = wa * stats.norm.pdf(z - a), wb * stats.norm.pdf(z - b)
    return (a * pa + b * pb) / (pa + pb)


def test_bayes_rule_examples():
    assert bayes_rule(DELTA0, 3.3) == 0.0
    assert bayes_rule(SYM, 0.0) == pytest.approx(0.0, abs=1e-15)
    g = DiscreteMixingMeasure([0.0, 7.0], [0.5, 0.5])
    for z in (3.5, 1.0, 6.2, -4.0):
        assert bayes_rule(g, z) == pytest.approx(two_atom_ratio(z, 0, 7, 0.5, 0.5), rel=1e-13, abs=1e-15)
    g = DiscreteMixingMeasure([-2.0, 3.0], [0.3, 0.7])
    assert bayes_rule(g, 0.4) == pytest.approx(two_atom_ratio(0.4, -2, 3, 0.3, 0.7), rel=1e-13)


def test_bayes_rule_far_tail_no_nan():
    g = DiscreteMixingMeasure([0.0, 7.0], [0.5, 0.5])
    out = bayes_rule(g, np.array([-1e4, -60.0, 60.0, 1e4]))
    assert np.all(np.isfinite(out))
    assert out[0] == 0.0 and out[-1] == 7.0


def test_tweedie_examples():
    assert tweedie_rule(DELTA0, 2.0) == pytest.approx(0.0, abs=1e-14)
    assert tweedie_rule(SYM, 0.0) == pytest.approx(0.0, abs=1e-15)


@given(measures(), st.lists(st.floats(-10, 10), min_size=1, max_size=20))
def test_tweedie_equals_bayes(g, zs):
    z = np.array(zs)
    f = GaussianMixtureDensity(g).pdf(z)
    ok = f > 1e-300
    assert np.all(np.abs(tweedie_rule(g, z)[ok] - bayes_rule(g, z)[ok]) < 1e-10)


@given(measures())
def test_bayes_rule_monotone_and_in_range(g):
    z = np.linspace(-15, 15, 601)
    d = bayes_rule(g, z)
    assert np.all(np.diff(d) >= -1e-12)
    assert np.all(d >= g.atoms.min() - 1e-12) and np.all(d <= g.atoms.max() + 1e-12)
    if np.unique(g.atoms).size >= 2:
        # strictly increasing where it is not numerically saturated
        inner = (d[:-1] > g.atoms.min() + 1e-9) & (d[1:] < g.atoms.max() - 1e-9)
        assert np.all(np.diff(d)[inner] > 0)


def test_regularized_rule_branches(rng):
    g = random_measure(rng, 4)
    dens = GaussianMixtureDensity(g)
    z = np.linspace(-4, 4, 41)
    rho = 0.5 * dens.pdf(z).min()
    assert np.allclose(regularized_rule(g, z, rho), tweedie_rule(g, z), atol=1e-10)
    assert np.allclose(regularized_rule(g, z, 10.0), z + dens.dpdf(z) / 10.0, rtol=1e-14)
    assert np.all(np.abs(regularized_rule(g, z, 10.0) - z) <= np.abs(dens.dpdf(z)) / 10.0 + 1e-15)
    with pytest.raises(ValueError):
        regularized_rule(g, 0.0, 0.0)


def test_regularized_rule_far_out():
    g = DiscreteMixingMeasure([-3.0, 0.5, 3.0], [0.2, 0.5, 0.3])
    rho = stats.norm.pdf(12.0)
    out = regularized_rule(g, 9.0, rho)
    # direct evaluation of the formula
    f = sum(w * stats.norm.pdf(9 - a) for a, w in zip(g.atoms, g.weights))
    fp = sum(-w * (9 - a) * stats.norm.pdf(9 - a) for a, w in zip(g.atoms, g.weights))
    assert out == pytest.approx(9 + fp / max(f, rho), rel=1e-12)
    assert np.isfinite(out) and -3 - 1e-9 <= out <= 9


def test_separable_apply():
    assert np.array_equal(separable_apply(DELTA0, Dataset([0.0, 0.0, 0.0])).mu, np.zeros(3))
    mu = np.array([0.0] * 6 + [7.0] * 3)
    g = empirical_measure(mu)
    z = np.linspace(-2, 9, 9)
    assert np.allclose(separable_apply(g, Dataset(z)).mu, [bayes_rule(g, v) for v in z], rtol=0, atol=0)


@given(measures(), st.lists(st.floats(-10, 10), min_size=2, max_size=15), st.randoms())
def test_separable_permutation_equivariance(g, zs, rnd):
    perm = list(range(len(zs)))
    rnd.shuffle(perm)
    a = separable_apply(g, Dataset(zs)).mu
    b = separable_apply(g, Dataset(np.array(zs)[perm])).mu
    assert np.array_equal(a[perm], b)


def test_oracle_rule():
    assert np.array_equal(oracle_rule(MeanVector(np.zeros(4)), Dataset([1.0, -3.0, 8.0, 0.0])).mu, np.zeros(4))
    assert np.allclose(oracle_rule(MeanVector([-1.0, 1.0]), Dataset([0.0, 0.0])).mu, 0.0, atol=1e-15)
    with pytest.raises(ValueError):
        oracle_rule(MeanVector([0.0]), Dataset([0.0, 1.0]))


def test_empirical_measure():
    g = empirical_measure([0.0, 0.0, 7.0])
    assert np.array_equal(g.atoms, [0.0, 7.0]) and np.allclose(g.weights, [2 / 3, 1 / 3])
    g = empirical_measure(MeanVector([1.0, 2.0, 3.0]))
    assert np.allclose(g.weights, 1 / 3)
    # exact-equality dedup: values one ulp apart stay distinct
    assert empirical_measure([1.0, np.nextafter(1.0, 2.0)]).atoms.size == 2


@given(measures(max_atoms=6))
def test_empirical_measure_roundtrip(g):
    counts = np.maximum(1, np.round(g.weights * 60)).astype(int)
    h = DiscreteMixingMeasure.from_unnormalized(g.atoms, counts)
    again = empirical_measure(np.repeat(h.atoms, counts))
    order = np.argsort(h.atoms)
    u, idx = np.unique(h.atoms[order], return_index=True)
    assert np.array_equal(again.atoms, u)


def test_james_stein_examples():
    for pp in (False, True):
        assert np.allclose(james_stein(Dataset([1.0, 0.0, 0.0]), pp).mu, 0.0)
    assert np.allclose(james_stein(Dataset([1.0] * 4)).mu, 0.5)
    z = Dataset([0.3, -0.2, 0.1, 0.5])       # ||z||^2 < n - 2
    assert np.array_equal(james_stein(z, True).mu, np.zeros(4))
    assert np.all(np.sign(james_stein(z).mu) == -np.sign(z.z))
    assert np.array_equal(james_stein(Dataset(np.zeros(5)), True).mu, np.zeros(5))
    with pytest.raises(DegenerateInputError):
        james_stein(Dataset(np.zeros(5)))


@pytest.mark.parametrize("seed", range(5))
def test_fundamental_theorem_identity(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    mu = np.round(rng.uniform(-4, 4, n), 1)
    if n > 2:
        mu[1] = mu[0]            # exercise repeated atoms
    g_t = random_measure(rng, 3)

    def t(x):
        return bayes_rule(g_t, x)

    assert compound_risk(t, mu) == pytest.approx(bayes_risk(t, empirical_measure(mu)), abs=1e-10)


def test_bayes_risk_of_identity_rule_is_one():
    # E(Z - mu)^2 = 1 under any prior
    assert bayes_risk(lambda x: x, DiscreteMixingMeasure([-2.0, 3.0], [0.4, 0.6])) == pytest.approx(1.0, abs=1e-10)
