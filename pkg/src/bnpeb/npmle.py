"""Kiefer-Wolfowitz NPMLE of the mixing distribution on a fixed grid.

Two solvers share the grid and the certificate:

* ``"ip"`` (default): primal-dual interior point on
  min -(1/n) sum_i log f_w(z_i) + sum_j w_j  over w >= 0, whose solution
  automatically sums to one.
* ``"em"``: multiplicative EM updates, optionally with SQUAREM extrapolation
  and a monotonicity safeguard.

Every fit is checked against the first-order optimality condition
(1/n) sum_i phi(z_i - mu) / f_G(z_i) <= 1 for all mu.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from bnpeb.model import Dataset, DiscreteMixingMeasure, MeanVector
from bnpeb.rules import separable_apply

log = logging.getLogger(__name__)

PRUNE_BELOW = 1e-12
REFINE_FACTOR = 10


@dataclass(frozen=True)
class NpmleConfig:
    grid_atoms: int = 300
    grid_lower: float | None = None     # None: min(z) - 0.5
    grid_upper: float | None = None     # None: max(z) + 0.5
    support_bound: float | None = None
    max_em_iters: int = 50000
    obj_tol: float = 1e-9
    kkt_tol: float = 1e-3
    solver: str = "ip"
    accelerate: bool = True         # SQUAREM, em solver only
    max_ip_iters: int = 200
    ip_tol: float = 1e-12

    def __post_init__(self):
        if self.grid_atoms < 2:
            raise ValueError("grid_atoms must be at least 2")
        if (self.grid_lower is not None and self.grid_upper is not None
                and not self.grid_lower < self.grid_upper):
            raise ValueError("grid_lower must be below grid_upper")
        if self.support_bound is not None and not self.support_bound > 0:
            raise ValueError("support_bound must be positive")
        if self.solver not in ("ip", "em"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.max_em_iters < 1:
            raise ValueError("max_em_iters must be positive")

    def interval(self, z):
        lo = float(np.min(z)) - 0.5 if self.grid_lower is None else float(self.grid_lower)
        hi = float(np.max(z)) + 0.5 if self.grid_upper is None else float(self.grid_upper)
        if self.support_bound is not None:
            m = float(self.support_bound)
            lo, hi = max(lo, -m), min(hi, m)
            if not lo < hi:
                lo, hi = -m, m
        if not lo < hi:
            raise ValueError("empty grid interval")
        return lo, hi

    def grid(self, z):
        lo, hi = self.interval(z)
        return np.linspace(lo, hi, self.grid_atoms)


@dataclass(frozen=True)
class KktCertificate:
    sup_gradient: float
    tol: float
    satisfied: bool
    argmax: float = float("nan")


@dataclass(frozen=True)
class NpmleFit:
    measure: DiscreteMixingMeasure
    certificate: KktCertificate
    log_likelihood: float           # mean log f_G(z_i)
    iterations: int
    converged: bool
    trace: np.ndarray               # mean log-likelihood per iteration

    def __iter__(self):
        # allows ``g, cert = fit(...)``
        return iter((self.measure, self.certificate))


def _scaled_kernel(z, grid):
    """Row-rescaled phi(z_i - g_j); the shift cancels in every EM ratio."""
    lk = -0.5 * (z[:, None] - grid[None, :]) ** 2
    shift = lk.max(axis=1)
    return np.exp(lk - shift[:, None]), shift - 0.5 * np.log(2 * np.pi)


def _loglik(kern, shift, w):
    return float(np.mean(np.log(kern @ w) + shift))


def _em_step(kern, w):
    f = kern @ w
    return w * (kern.T @ (1.0 / f)) / kern.shape[0]


def kkt_certificate(g: DiscreteMixingMeasure, z, points, tol=1e-3) -> KktCertificate:
    """sup over ``points`` of (1/n) sum_i phi(z_i - mu) / f_G(z_i)."""
    z = np.asarray(z, dtype=float)
    points = np.asarray(points, dtype=float)
    # phi(z_i - mu) / f_G(z_i) evaluated in log space
    lf = -0.5 * (z[:, None] - g.atoms[None, :]) ** 2 + np.log(np.maximum(g.weights, 1e-300))[None, :]
    m = lf.max(axis=1)
    log_f = m + np.log(np.exp(lf - m[:, None]).sum(axis=1))
    grad = np.exp(-0.5 * (z[:, None] - points[None, :]) ** 2 - log_f[:, None]).mean(axis=0)
    j = int(np.argmax(grad))
    sup = float(grad[j])
    return KktCertificate(sup, tol, sup <= 1.0 + tol, float(points[j]))


def fit(data: Dataset, cfg: NpmleConfig = NpmleConfig()) -> NpmleFit:
    z = data.z
    grid = cfg.grid(z)
    kern, shift = _scaled_kernel(z, grid)
    if cfg.solver == "ip":
        w, it, converged, trace = _interior_point(kern, shift, cfg)
    else:
        w, it, converged, trace = _em(kern, shift, cfg)
    ll = _loglik(kern, shift, w)

    keep = w >= PRUNE_BELOW
    g = DiscreteMixingMeasure.from_unnormalized(grid[keep], w[keep], cfg.support_bound)
    fine = np.linspace(grid[0], grid[-1], REFINE_FACTOR * (grid.size - 1) + 1)
    cert = kkt_certificate(g, z, fine, cfg.kkt_tol)
    if not cert.satisfied:
        log.warning("NPMLE fit not certified: sup gradient %.6g > 1 + %g", cert.sup_gradient, cfg.kkt_tol)
    if not converged:
        log.warning("NPMLE solver stopped at the iteration cap (%d)", it)
    return NpmleFit(g, cert, ll, it, converged, np.asarray(trace))


def _em(kern, shift, cfg):
    w = np.full(kern.shape[1], 1.0 / kern.shape[1])
    ll = _loglik(kern, shift, w)
    trace = [ll]
    it = 0
    while it < cfg.max_em_iters:
        if cfg.accelerate:
            w_new, ll_new, used = _squarem_step(kern, shift, w, ll)
            it += used
        else:
            w_new = _em_step(kern, w)
            ll_new = _loglik(kern, shift, w_new)
            it += 1
        w, dll, ll = w_new, ll_new - ll, ll_new
        trace.append(ll)
        if abs(dll) <= cfg.obj_tol * max(1.0, abs(ll)):
            return w, it, True, trace
    return w, it, False, trace


def _interior_point(kern, shift, cfg):
    """Primal-dual Newton iterations on the complementarity system.

    The dual variable lam_j = 1 - (1/n) sum_i K_ij / f_i is exactly the slack
    of the optimality condition, so convergence certifies the grid optimum.
    """
    n, m = kern.shape
    w = np.full(m, 1.0 / m)
    lam = np.ones(m)
    trace = []
    diag = np.diag_indices(m)
    for it in range(1, cfg.max_ip_iters + 1):
        f = kern @ w
        kd = kern / f[:, None]
        grad = 1.0 - kd.sum(axis=0) / n
        mu = float(w @ lam) / m
        resid = float(np.max(np.abs(grad - lam)))
        trace.append(float(np.mean(np.log(f) + shift)))
        if mu < cfg.ip_tol and resid < 1e3 * cfg.ip_tol:
            return w / w.sum(), it, True, trace
        sigma = 0.1 if mu > 1e-6 else 0.01
        hess = kd.T @ kd / n
        hess[diag] += lam / w
        rhs = -grad + sigma * mu / w
        # Jacobi scaling: lam / w spans many orders of magnitude near the optimum.
        d = 1.0 / np.sqrt(hess[diag])
        scaled = hess * d[:, None] * d[None, :]
        try:
            dw = d * linalg.cho_solve(linalg.cho_factor(scaled, check_finite=False), d * rhs,
                                      check_finite=False)
        except linalg.LinAlgError:
            dw = d * linalg.lstsq(scaled, d * rhs, check_finite=False)[0]
        dlam = sigma * mu / w - lam - (lam / w) * dw
        step = min(1.0, _max_step(w, dw), _max_step(lam, dlam))
        w = w + step * dw
        lam = lam + step * dlam
    return w / w.sum(), cfg.max_ip_iters, False, trace


def _max_step(x, dx, frac=0.995):
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return frac * float(np.min(-x[neg] / dx[neg]))


def _squarem_step(kern, shift, w0, ll0):
    """One SQUAREM cycle (two EM maps plus extrapolation and a stabilizing EM map).

    Falls back to the plain EM iterate if the extrapolation does not improve
    the likelihood, so the objective never decreases.
    """
    w1 = _em_step(kern, w0)
    w2 = _em_step(kern, w1)
    r = w1 - w0
    v = w2 - w1 - r
    rn, vn = np.sqrt(r @ r), np.sqrt(v @ v)
    ll2 = _loglik(kern, shift, w2)
    if vn == 0 or rn == 0:
        return w2, ll2, 2
    step = -rn / vn
    if step > -1.0:
        return w2, ll2, 2
    w_ext = w0 - 2 * step * r + step * step * v
    if np.any(w_ext < 0):
        w_ext = np.maximum(w_ext, 0.0)
    total = w_ext.sum()
    if not total > 0:
        return w2, ll2, 2
    w_ext = _em_step(kern, w_ext / total)
    ll_ext = _loglik(kern, shift, w_ext)
    if ll_ext >= ll2:
        return w_ext, ll_ext, 3
    return w2, ll2, 2


def plugin_rule(data: Dataset, cfg: NpmleConfig = NpmleConfig()) -> MeanVector:
    """delta_{G_hat}(z_i) for the fitted NPMLE."""
    return separable_apply(fit(data, cfg).measure, data)
