"""Divergences between Gaussian location-mixture marginals.

All integrals use the fixed Simpson grid on [-(M + 10), M + 10], where M is the
larger support radius of the two mixing measures.
"""

from __future__ import annotations

import numpy as np

from bnpeb.model import DiscreteMixingMeasure, GaussianMixtureDensity
from bnpeb.quadrature import DEFAULT_STEP, real_line_grid
from bnpeb.rules import bayes_rule, empirical_measure

DENSITY_FLOOR = 1e-300


def _grid(g, q, step):
    return real_line_grid(max(g.radius, q.radius), step)


def hellinger(g: DiscreteMixingMeasure, q: DiscreteMixingMeasure, step=DEFAULT_STEP):
    """Hellinger distance H with H^2 = 1/2 int (sqrt f_g - sqrt f_q)^2."""
    x, w = _grid(g, q, step)
    fg = GaussianMixtureDensity(g).pdf(x)
    fq = GaussianMixtureDensity(q).pdf(x)
    h2 = 0.5 * np.sum(w * (np.sqrt(fg) - np.sqrt(fq)) ** 2)
    return float(np.sqrt(min(max(h2, 0.0), 1.0)))


def kl(g: DiscreteMixingMeasure, q: DiscreteMixingMeasure, step=DEFAULT_STEP):
    """KL(f_g || f_q) with log densities evaluated by log-sum-exp."""
    x, w = _grid(g, q, step)
    lg = np.maximum(GaussianMixtureDensity(g).log_pdf(x), np.log(DENSITY_FLOOR))
    lq = np.maximum(GaussianMixtureDensity(q).log_pdf(x), np.log(DENSITY_FLOOR))
    val = np.sum(w * np.exp(lg) * (lg - lq))
    return float(max(val, 0.0))


def fisher_divergence(g: DiscreteMixingMeasure, q: DiscreteMixingMeasure, step=DEFAULT_STEP):
    """int (f_g'/f_g - f_q'/f_q)^2 f_g, from the two marginal scores."""
    x, w = _grid(g, q, step)
    dg, dq = GaussianMixtureDensity(g), GaussianMixtureDensity(q)
    fg = dg.pdf(x)
    sg = dg.dpdf(x) / np.maximum(fg, DENSITY_FLOOR)
    sq = dq.dpdf(x) / np.maximum(dq.pdf(x), DENSITY_FLOOR)
    return float(np.sum(w * (sg - sq) ** 2 * fg))


def posterior_mean_discrepancy(g: DiscreteMixingMeasure, q: DiscreteMixingMeasure, step=DEFAULT_STEP):
    """int (delta_g - delta_q)^2 f_g, the posterior-mean side of the Fisher identity."""
    x, w = _grid(g, q, step)
    fg = GaussianMixtureDensity(g).pdf(x)
    return float(np.sum(w * (bayes_rule(g, x) - bayes_rule(q, x)) ** 2 * fg))


def compound_marginal(mu) -> GaussianMixtureDensity:
    """f_mu(z) = (1/n) sum_i phi(z - mu_i)."""
    return GaussianMixtureDensity(empirical_measure(mu))


def diagnose(g: DiscreteMixingMeasure, q: DiscreteMixingMeasure, step=DEFAULT_STEP):
    return {"hellinger": hellinger(g, q, step), "kl": kl(g, q, step),
            "fisher": fisher_divergence(g, q, step)}
