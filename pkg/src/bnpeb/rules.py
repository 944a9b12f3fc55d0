"""Decision rules for the Gaussian sequence model."""

from __future__ import annotations

import numpy as np

from bnpeb.model import Dataset, DiscreteMixingMeasure, GaussianMixtureDensity, MeanVector
from bnpeb.quadrature import simpson_grid, TAIL_PAD


def _scalar_or_array(z, out):
    return float(out) if np.ndim(z) == 0 else out


def bayes_rule(g: DiscreteMixingMeasure, z):
    """Posterior mean E_G[mu | Z = z] as a softmax-weighted average of atoms."""
    out = GaussianMixtureDensity(g).posterior_mean(z)
    return _scalar_or_array(z, out)


def tweedie_rule(g: DiscreteMixingMeasure, z):
    """z + f'_G(z) / f_G(z)."""
    z_arr = np.asarray(z, dtype=float)
    out = z_arr + GaussianMixtureDensity(g).score(z_arr)
    return _scalar_or_array(z, out)


def regularized_rule(g: DiscreteMixingMeasure, z, rho):
    """z + f'_G(z) / max(f_G(z), rho)."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    dens = GaussianMixtureDensity(g)
    z_arr = np.asarray(z, dtype=float)
    out = z_arr + dens.dpdf(z_arr) / np.maximum(dens.pdf(z_arr), rho)
    return _scalar_or_array(z, out)


def separable_apply(g: DiscreteMixingMeasure, data: Dataset) -> MeanVector:
    return MeanVector(GaussianMixtureDensity(g).posterior_mean(data.z))


def empirical_measure(mu) -> DiscreteMixingMeasure:
    """G_n(mu): one atom per distinct value, weight = multiplicity / n."""
    values = mu.mu if isinstance(mu, MeanVector) else np.asarray(mu, dtype=float)
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size == 0:
        raise ValueError("empty mean vector")
    atoms, counts = np.unique(values, return_counts=True)
    return DiscreteMixingMeasure(atoms, counts / values.size)


def oracle_rule(mu: MeanVector, data: Dataset) -> MeanVector:
    """Best separable rule delta_{G_n(mu)} applied to the data."""
    if len(mu) != len(data):
        raise ValueError(f"length mismatch: {len(mu)} means vs {len(data)} observations")
    return separable_apply(empirical_measure(mu), data)


class DegenerateInputError(ValueError):
    pass


def james_stein(data: Dataset, positive_part=False) -> MeanVector:
    z = data.z
    n = z.size
    norm2 = float(z @ z)
    if norm2 == 0.0:
        if positive_part:
            return MeanVector(np.zeros(n))
        raise DegenerateInputError("||Z||^2 = 0: James-Stein factor is undefined")
    factor = 1.0 - (n - 2) / norm2
    if positive_part:
        factor = max(factor, 0.0)
    return MeanVector(factor * z)


# ---------------------------------------------------------------------------
# Risks of separable rules, computed by quadrature.


def _risk_grid(centers, step):
    centers = np.asarray(centers, dtype=float)
    return simpson_grid(centers.min() - TAIL_PAD - 2.0, centers.max() + TAIL_PAD + 2.0, step)


def compound_risk(t, mu, step=0.005):
    """Squared RMSE (1/n) sum_i E_mu (t(Z_i) - mu_i)^2 for a separable rule t."""
    mu = np.asarray(mu.mu if isinstance(mu, MeanVector) else mu, dtype=float)
    x, w = _risk_grid(mu, step)
    tx = np.asarray(t(x), dtype=float)
    total = 0.0
    for m in mu:
        phi = np.exp(-0.5 * (x - m) ** 2) / np.sqrt(2 * np.pi)
        total += np.sum(w * (tx - m) ** 2 * phi)
    return total / mu.size


def bayes_risk(t, g: DiscreteMixingMeasure, step=0.005):
    """Squared Bayes risk E_G (t(Z) - mu)^2 for a separable rule t."""
    x, w = _risk_grid(g.atoms, step)
    tx = np.asarray(t(x), dtype=float)
    total = 0.0
    for a, p in zip(g.atoms, g.weights):
        phi = np.exp(-0.5 * (x - a) ** 2) / np.sqrt(2 * np.pi)
        total += p * np.sum(w * (tx - a) ** 2 * phi)
    return total
