"""Collapsed Gibbs sampler for the DP location mixture with a uniform base.

Each sweep reassigns every observation given the others (existing cluster
with weight n_{-i,c} phi(z_i - mu_c), new cluster with weight
alpha * f_H(z_i)), redraws every cluster location from its truncated-normal
conditional, and then updates alpha with the Beta-auxiliary scheme for a
Gamma prior.  The posterior mean is accumulated from the conditional
cluster means, not the raw location draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from bnpeb import _special
from bnpeb.model import Dataset, MeanVector, UniformBase

TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class DpConfig:
    base: UniformBase = field(default_factory=UniformBase)
    alpha_shape: float = 0.01
    alpha_scale: float = 100.0
    alpha_fixed: float | None = None
    burn_in_sweeps: int = 2000
    sample_sweeps: int = 10000
    seed: int = 0

    def __post_init__(self):
        if not (self.alpha_shape > 0 and self.alpha_scale > 0):
            raise ValueError("alpha_shape and alpha_scale must be positive")
        if self.alpha_fixed is not None and not self.alpha_fixed > 0:
            raise ValueError("alpha_fixed must be positive")
        if self.burn_in_sweeps < 0:
            raise ValueError("burn_in_sweeps must be nonnegative")
        if self.sample_sweeps < 1:
            raise ValueError("sample_sweeps must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def alpha_rate(self):
        return 1.0 / self.alpha_scale

    @property
    def alpha_prior_mean(self):
        return self.alpha_shape * self.alpha_scale

    @property
    def initial_alpha(self):
        return self.alpha_fixed if self.alpha_fixed is not None else self.alpha_prior_mean


@dataclass
class GibbsState:
    assignment: np.ndarray          # cluster id per observation
    cluster_locations: dict         # cluster id -> mu_c
    alpha: float
    rng: np.random.Generator

    def cluster_sizes(self):
        ids, counts = np.unique(self.assignment, return_counts=True)
        return dict(zip(ids.tolist(), counts.tolist()))

    def check(self, base: UniformBase, n=None):
        sizes = self.cluster_sizes()
        if n is not None and len(self.assignment) != n:
            raise AssertionError("assignment length does not match data")
        if set(sizes) != set(self.cluster_locations):
            raise AssertionError("cluster ids and location entries disagree")
        if sum(sizes.values()) != len(self.assignment):
            raise AssertionError("cluster sizes do not sum to n")
        for loc in self.cluster_locations.values():
            if not base.lower <= loc <= base.upper:
                raise AssertionError(f"cluster location {loc} outside base support")
        if not self.alpha > 0:
            raise AssertionError("alpha must be positive")


@dataclass(frozen=True)
class PosteriorSummary:
    mean: MeanVector
    sweeps_used: int
    alpha_mean: float
    alpha_var: float
    mean_clusters: float


def initial_state(data: Dataset, cfg: DpConfig, rng=None) -> GibbsState:
    """All observations in one cluster at the clamped sample mean."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    loc = float(np.clip(data.z.mean(), cfg.base.lower, cfg.base.upper))
    return GibbsState(np.zeros(len(data), dtype=np.int64), {0: loc}, float(cfg.initial_alpha), rng)


# ---------------------------------------------------------------------------
# compiled kernels


@njit(cache=True)
def _resample_alpha(alpha, k, n, a0, r0, rng):
    eta = rng.beta(alpha + 1.0, float(n))
    if eta < TINY:
        eta = TINY
    rate = r0 - math.log(eta)
    shape2 = a0 + k - 1.0
    if shape2 <= 0.0:
        shape = a0 + k
    else:
        odds = shape2 / (n * rate)
        if rng.random() < odds / (1.0 + odds):
            shape = a0 + k
        else:
            shape = shape2
    out = rng.gamma(shape, 1.0 / rate)
    if out < TINY:
        out = TINY
    return out


@njit(cache=True)
def _gumbel(rng):
    u = rng.random()
    if u <= 0.0:
        u = TINY
    return -math.log(-math.log(u))


@njit(cache=True)
def _sweep(z, log_fh, a, b, assign, counts, locs, slot_id, active, pos, free, meta,
           sums, alpha, fixed, a0, r0, rng):
    """One full sweep; returns the new alpha.  meta = [n_active, n_free, next_id]."""
    n = z.shape[0]
    log_alpha = math.log(alpha)
    for i in range(n):
        s = assign[i]
        counts[s] -= 1
        if counts[s] == 0:
            p = pos[s]
            last = active[meta[0] - 1]
            active[p] = last
            pos[last] = p
            meta[0] -= 1
            free[meta[1]] = s
            meta[1] += 1
        zi = z[i]
        best = log_alpha + log_fh[i] + _gumbel(rng)
        choice = -1
        for k in range(meta[0]):
            t = active[k]
            d = zi - locs[t]
            lw = math.log(counts[t]) - 0.5 * d * d - _special.HALF_LOG_2PI + _gumbel(rng)
            if lw > best:
                best = lw
                choice = t
        if choice < 0:
            meta[1] -= 1
            choice = free[meta[1]]
            active[meta[0]] = choice
            pos[choice] = meta[0]
            meta[0] += 1
            slot_id[choice] = meta[2]
            meta[2] += 1
            counts[choice] = 0
            locs[choice] = _special.tn_sample(zi, 1.0, a, b, rng)
        counts[choice] += 1
        assign[i] = choice

    for k in range(meta[0]):
        sums[active[k]] = 0.0
    for i in range(n):
        sums[assign[i]] += z[i]
    for k in range(meta[0]):
        t = active[k]
        locs[t] = _special.tn_sample(sums[t] / counts[t], 1.0 / math.sqrt(counts[t]), a, b, rng)

    if not fixed:
        alpha = _resample_alpha(alpha, meta[0], n, a0, r0, rng)
    return alpha


@njit(cache=True)
def _audit(assign, counts, active, meta, n):
    total = 0
    for k in range(meta[0]):
        if counts[active[k]] <= 0:
            return False
        total += counts[active[k]]
    if total != n:
        return False
    for i in range(n):
        if counts[assign[i]] <= 0:
            return False
    return True


@njit(cache=True)
def _run_chain(z, log_fh, a, b, assign, counts, locs, slot_id, active, pos, free, meta,
               alpha, fixed, a0, r0, n_burn, n_keep, audit, rng):
    n = z.shape[0]
    cap = counts.shape[0]
    sums = np.zeros(cap)
    cond_mean = np.zeros(cap)
    acc = np.zeros(n)
    alpha_sum = 0.0
    alpha_sq = 0.0
    k_sum = 0.0
    for it in range(n_burn + n_keep):
        alpha = _sweep(z, log_fh, a, b, assign, counts, locs, slot_id, active, pos, free,
                       meta, sums, alpha, fixed, a0, r0, rng)
        if audit and not _audit(assign, counts, active, meta, n):
            raise RuntimeError("cluster bookkeeping corrupted")
        if it >= n_burn:
            for k in range(meta[0]):
                t = active[k]
                cond_mean[t] = _special.tn_mean(sums[t] / counts[t], 1.0 / math.sqrt(counts[t]), a, b)
            for i in range(n):
                acc[i] += cond_mean[assign[i]]
            alpha_sum += alpha
            alpha_sq += alpha * alpha
            k_sum += meta[0]
    return acc, alpha_sum, alpha_sq, k_sum, alpha


# ---------------------------------------------------------------------------
# Python-level API


class _Arrays:
    """Slot-based storage used by the kernels; slots are internal labels."""

    def __init__(self, state: GibbsState, n):
        cap = n + 1
        # slots follow first appearance in the assignment, so any relabeling of
        # cluster ids yields the same kernel layout and the same random stream
        ids = list(dict.fromkeys(np.asarray(state.assignment).tolist()))
        slot_of = {cid: s for s, cid in enumerate(ids)}
        self.assign = np.array([slot_of[c] for c in state.assignment], dtype=np.int64)
        self.counts = np.zeros(cap, dtype=np.int64)
        np.add.at(self.counts, self.assign, 1)
        self.locs = np.zeros(cap)
        self.slot_id = np.full(cap, -1, dtype=np.int64)
        for cid, s in slot_of.items():
            self.locs[s] = state.cluster_locations[cid]
            self.slot_id[s] = cid
        k = len(ids)
        self.active = np.zeros(cap, dtype=np.int64)
        self.active[:k] = np.arange(k)
        self.pos = np.zeros(cap, dtype=np.int64)
        self.pos[:k] = np.arange(k)
        n_free = cap - k
        # Stack top is the lowest free slot.
        self.free = np.zeros(cap, dtype=np.int64)
        self.free[:n_free] = np.arange(cap - 1, k - 1, -1)
        next_id = (max(ids) + 1) if ids else 0
        self.meta = np.array([k, n_free, next_id], dtype=np.int64)

    def to_state(self, alpha, rng):
        k = self.meta[0]
        act = self.active[:k]
        ids = self.slot_id[self.assign]
        locs = {int(self.slot_id[s]): float(self.locs[s]) for s in act}
        return GibbsState(ids.astype(np.int64), locs, float(alpha), rng)


def _log_fh(data: Dataset, base: UniformBase):
    return np.array([_special.log_uniform_marginal(v, base.lower, base.upper, 1.0) for v in data.z])


def sweep(state: GibbsState, data: Dataset, cfg: DpConfig) -> GibbsState:
    """One full Gibbs sweep; returns a new state sharing the (advanced) rng."""
    n = len(data)
    state.check(cfg.base, n)
    arr = _Arrays(state, n)
    sums = np.zeros(n + 1)
    alpha = _sweep(data.z, _log_fh(data, cfg.base), cfg.base.lower, cfg.base.upper,
                   arr.assign, arr.counts, arr.locs, arr.slot_id, arr.active, arr.pos,
                   arr.free, arr.meta, sums, state.alpha, cfg.alpha_fixed is not None,
                   cfg.alpha_shape, cfg.alpha_rate, state.rng)
    new = arr.to_state(alpha, state.rng)
    new.check(cfg.base, n)
    return new


def resample_alpha(alpha, k_occupied, n, cfg: DpConfig, rng):
    if not 1 <= k_occupied <= n:
        raise ValueError("need 1 <= k_occupied <= n")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return _resample_alpha(float(alpha), int(k_occupied), int(n), cfg.alpha_shape, cfg.alpha_rate, rng)


def run_chain(data: Dataset, cfg: DpConfig, state: GibbsState | None = None, audit=False):
    """Run burn-in plus kept sweeps; returns (summary, final_state)."""
    n = len(data)
    if state is None:
        state = initial_state(data, cfg)
    state.check(cfg.base, n)
    arr = _Arrays(state, n)
    acc, a_sum, a_sq, k_sum, alpha = _run_chain(
        data.z, _log_fh(data, cfg.base), cfg.base.lower, cfg.base.upper,
        arr.assign, arr.counts, arr.locs, arr.slot_id, arr.active, arr.pos, arr.free, arr.meta,
        float(state.alpha), cfg.alpha_fixed is not None, cfg.alpha_shape, cfg.alpha_rate,
        int(cfg.burn_in_sweeps), int(cfg.sample_sweeps), bool(audit), state.rng)
    m = cfg.sample_sweeps
    a_mean = a_sum / m
    summary = PosteriorSummary(
        mean=MeanVector(acc / m),
        sweeps_used=m,
        alpha_mean=a_mean,
        alpha_var=max(a_sq / m - a_mean * a_mean, 0.0),
        mean_clusters=k_sum / m,
    )
    return summary, arr.to_state(alpha, state.rng)


def estimate(data: Dataset, cfg: DpConfig, audit=False) -> PosteriorSummary:
    """Posterior mean of mu under the DP mixture; deterministic given cfg.seed."""
    return run_chain(data, cfg, audit=audit)[0]
