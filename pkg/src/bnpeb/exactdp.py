"""Exact DP-mixture posterior quantities for small n by summing over set partitions.

Partitions are visited as restricted growth strings in lexicographic order;
the prior weight of a partition with blocks B_1..B_k is
alpha^k prod Gamma(|B_j|) (up to a constant), and the likelihood factorizes
into block marginals under the uniform base.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from bnpeb import _special
from bnpeb.model import Dataset, MeanVector, UniformBase, log_block_marginal_likelihood
from bnpeb.quadrature import DEFAULT_STEP, simpson_grid

MAX_N = 12


class ExactSizeError(ValueError):
    pass


@dataclass(frozen=True)
class PartitionWeight:
    partition: tuple      # tuple of blocks, each a tuple of 0-based indices
    log_weight: float


def set_partitions(n):
    """Yield restricted growth strings of length n in lexicographic order."""
    if n < 1:
        return
    a = [0] * n
    yield tuple(a)
    while True:
        prefix_max = [0] * n
        for i in range(1, n):
            prefix_max[i] = max(prefix_max[i - 1], a[i])
        i = n - 1
        while i > 0 and a[i] > prefix_max[i - 1]:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        for j in range(i + 1, n):
            a[j] = 0
        yield tuple(a)


def rgs_blocks(rgs):
    k = max(rgs) + 1
    return tuple(tuple(i for i, c in enumerate(rgs) if c == b) for b in range(k))


def _check_n(n):
    if n > MAX_N:
        raise ExactSizeError(f"exact enumeration refuses n = {n} > {MAX_N} (Bell-number blow-up)")


def _subset_tables(z, base: UniformBase):
    """log block marginal, block size, and conditional mean for every nonempty subset."""
    n = z.size
    nm = 1 << n
    logm = np.full(nm, -np.inf)
    size = np.zeros(nm, dtype=np.int64)
    cmean = np.zeros(nm)
    for mask in range(1, nm):
        idx = [i for i in range(n) if mask >> i & 1]
        zs = z[idx]
        k = len(idx)
        size[mask] = k
        logm[mask] = log_block_marginal_likelihood(zs, base)
        cmean[mask] = _special.tn_mean(zs.mean(), 1.0 / math.sqrt(k), base.lower, base.upper)
    return logm, size, cmean


@njit(cache=True)
def _partition_pass(n, logm, lgam, log_alpha, shift, blockprob):
    """Visit every partition once.

    With blockprob empty, returns the max log weight.  Otherwise adds
    exp(lw - shift) to blockprob[mask] for every block and returns the total.
    """
    a = np.zeros(n, dtype=np.int64)
    pmax = np.zeros(n, dtype=np.int64)
    masks = np.zeros(n, dtype=np.int64)
    accumulate = blockprob.shape[0] > 0
    best = -np.inf
    total = 0.0
    while True:
        k = 0
        for c in range(n):
            masks[c] = 0
        for i in range(n):
            masks[a[i]] |= 1 << i
            if a[i] + 1 > k:
                k = a[i] + 1
        lw = k * log_alpha
        for c in range(k):
            lw += lgam[masks[c]] + logm[masks[c]]
        if accumulate:
            w = math.exp(lw - shift)
            total += w
            for c in range(k):
                blockprob[masks[c]] += w
        elif lw > best:
            best = lw
        # next restricted growth string
        pmax[0] = 0
        for i in range(1, n):
            pmax[i] = pmax[i - 1] if pmax[i - 1] > a[i] else a[i]
        i = n - 1
        while i > 0 and a[i] > pmax[i - 1]:
            i -= 1
        if i == 0:
            break
        a[i] += 1
        for j in range(i + 1, n):
            a[j] = 0
    return total if accumulate else best


def block_probabilities(z, alpha, base: UniformBase):
    """P(B is a block of the partition | z) for every subset mask B, plus tables."""
    z = np.asarray(z, dtype=float)
    n = z.size
    _check_n(n)
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    logm, size, cmean = _subset_tables(z, base)
    lgam = np.array([math.lgamma(s) if s > 0 else 0.0 for s in size])
    log_alpha = math.log(alpha)
    shift = _partition_pass(n, logm, lgam, log_alpha, 0.0, np.zeros(0))
    prob = np.zeros(1 << n)
    total = _partition_pass(n, logm, lgam, log_alpha, shift, prob)
    return prob / total, size, cmean


def partition_weights(data: Dataset, alpha, base: UniformBase, normalized=True):
    """All partitions with their (normalized) log posterior weights."""
    z = data.z
    n = z.size
    _check_n(n)
    out = []
    for rgs in set_partitions(n):
        blocks = rgs_blocks(rgs)
        lw = len(blocks) * math.log(alpha)
        for blk in blocks:
            lw += math.lgamma(len(blk)) + log_block_marginal_likelihood(z[list(blk)], base)
        out.append(PartitionWeight(blocks, lw))
    if normalized:
        lws = np.array([p.log_weight for p in out])
        m = lws.max()
        lse = m + math.log(np.sum(np.exp(lws - m)))
        out = [PartitionWeight(p.partition, p.log_weight - lse) for p in out]
    return out


def exact_posterior_mean(data: Dataset, alpha, base: UniformBase = UniformBase()) -> MeanVector:
    """E[mu_i | Z] summed exactly over partitions."""
    n = len(data)
    prob, _, cmean = block_probabilities(data.z, alpha, base)
    masks = np.arange(1 << n)
    out = np.empty(n)
    for i in range(n):
        sel = (masks >> i) & 1 == 1
        out[i] = np.sum(prob[sel] * cmean[sel])
    return MeanVector(out)


def posterior_mean_prior_density(z_rest, alpha, base: UniformBase, x):
    """Density on x of E[G | Z_rest] = (alpha H + sum_j law(mu_j | Z_rest)) / (alpha + m)."""
    z_rest = np.asarray(z_rest, dtype=float)
    m = z_rest.size
    dens = np.full_like(x, alpha / base.width)
    if m > 0:
        prob, size, _ = block_probabilities(z_rest, alpha, base)
        for mask in np.nonzero(prob > 0)[0]:
            k = size[mask]
            zb = z_rest[[i for i in range(m) if mask >> i & 1]].mean()
            tau = 1.0 / math.sqrt(k)
            logz = _special.log_ndtr_diff((base.lower - zb) / tau, (base.upper - zb) / tau)
            s = (x - zb) / tau
            dens += prob[mask] * k * np.exp(-0.5 * s * s - _special.HALF_LOG_2PI - math.log(tau) - logz)
    return dens / (alpha + m)


def exact_loo_rule(data: Dataset, i, alpha, base: UniformBase = UniformBase(), step=DEFAULT_STEP):
    """delta_{E[G | Z_{-i}]}(Z_i), integrating over the base interval by Simpson."""
    n = len(data)
    _check_n(n)
    if not 0 <= i < n:
        raise IndexError(f"index {i} out of range for n = {n}")
    z = data.z
    x, w = simpson_grid(base.lower, base.upper, step)
    dens = posterior_mean_prior_density(np.delete(z, i), alpha, base, x)
    d2 = (z[i] - x) ** 2
    kern = w * dens * np.exp(-0.5 * (d2 - d2.min()))
    return float(np.sum(kern * x) / np.sum(kern))
