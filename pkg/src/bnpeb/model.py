"""Core value types: mixing measures, datasets, and uniform-base closed forms."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from bnpeb import _special

WEIGHT_SUM_TOL = 1e-12


def _frozen(x, dtype=float):
    arr = np.array(x, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DiscreteMixingMeasure:
    """A finitely supported prior ``G = sum_j w_j delta_{atoms_j}``."""

    atoms: np.ndarray
    weights: np.ndarray
    support_bound: float | None = None

    def __post_init__(self):
        atoms = _frozen(self.atoms)
        weights = _frozen(self.weights)
        if atoms.size == 0 or atoms.size != weights.size:
            raise ValueError("atoms and weights must be nonempty and of equal length")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atoms must be finite")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("weights must be finite and nonnegative")
        total = weights.sum()
        if total == 0:
            raise ValueError("degenerate all-zero weight vector")
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        if self.support_bound is not None:
            m = float(self.support_bound)
            if np.any(np.abs(atoms) > m):
                raise ValueError(f"atom outside [-{m}, {m}]")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_unnormalized(cls, atoms, weights, support_bound=None):
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if not total > 0:
            raise ValueError("degenerate all-zero weight vector")
        return cls(atoms, w / total, support_bound)

    @classmethod
    def point_mass(cls, x):
        return cls([float(x)], [1.0])

    def __len__(self):
        return self.atoms.size

    @property
    def radius(self):
        """Largest |atom|, or the declared support bound if one was given."""
        r = float(np.max(np.abs(self.atoms)))
        if self.support_bound is not None:
            r = max(r, float(self.support_bound))
        return r

    def mass_within(self, center, radius):
        return float(self.weights[np.abs(self.atoms - center) <= radius].sum())

    def to_csv(self, path=None):
        return write_csv({"atom": self.atoms, "weight": self.weights}, path)

    @classmethod
    def from_csv(cls, source):
        cols = read_csv(source, ["atom", "weight"])
        return cls(cols["atom"], cols["weight"])


class GaussianMixtureDensity:
    """Marginal ``f_G = G * N(0, 1)`` with its derivative and posterior mean.

    Everything is evaluated with a per-point max shift so that far-tail
    evaluations stay finite.
    """

    def __init__(self, g: DiscreteMixingMeasure):
        self.g = g
        pos = g.weights > 0
        self._atoms = g.atoms[pos]
        self._logw = np.log(g.weights[pos])

    def _log_terms(self, z):
        z = np.asarray(z, dtype=float)
        d = z[..., None] - self._atoms
        return self._logw - 0.5 * d * d - _special.HALF_LOG_2PI, d

    def log_pdf(self, z):
        lt, _ = self._log_terms(z)
        return logsumexp(lt, axis=-1)

    def pdf(self, z):
        lt, _ = self._log_terms(z)
        return np.exp(lt).sum(axis=-1)

    def dpdf(self, z):
        """f'_G(z) = sum_j w_j (a_j - z) phi(z - a_j)."""
        lt, d = self._log_terms(z)
        return (-d * np.exp(lt)).sum(axis=-1)

    def score(self, z):
        """f'_G / f_G computed from directly rescaled sums (no softmax)."""
        lt, d = self._log_terms(z)
        shift = lt.max(axis=-1, keepdims=True)
        e = np.exp(lt - shift)
        return (-d * e).sum(axis=-1) / e.sum(axis=-1)

    def posterior_mean(self, z):
        lt, _ = self._log_terms(z)
        lt = lt - lt.max(axis=-1, keepdims=True)
        p = np.exp(lt)
        p /= p.sum(axis=-1, keepdims=True)
        # row-wise reduction rather than matmul: BLAS rounding can depend on row position
        return (p * self._atoms).sum(axis=-1)

    __call__ = pdf


@dataclass(frozen=True)
class UniformBase:
    lower: float = -10.0
    upper: float = 10.0

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValueError("base bounds must be finite")
        if not self.lower < self.upper:
            raise ValueError(f"need lower < upper, got [{self.lower}, {self.upper}]")

    @property
    def width(self):
        return self.upper - self.lower

    @classmethod
    def parse(cls, text):
        parts = [p.strip() for p in str(text).split(",")]
        if len(parts) != 2:
            raise ValueError(f"base must look like 'a,b', got {text!r}")
        return cls(float(parts[0]), float(parts[1]))


@dataclass(frozen=True)
class Dataset:
    z: np.ndarray

    def __post_init__(self):
        z = _frozen(self.z)
        if z.size == 0:
            raise ValueError("dataset must contain at least one observation")
        if not np.all(np.isfinite(z)):
            raise ValueError("observations must be finite")
        object.__setattr__(self, "z", z)

    def __len__(self):
        return self.z.size

    def to_csv(self, path=None):
        return write_csv({"z": self.z}, path)

    @classmethod
    def from_csv(cls, source):
        return cls(read_csv(source, ["z"])["z"])


@dataclass(frozen=True)
class MeanVector:
    mu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", _frozen(self.mu))

    def __len__(self):
        return self.mu.size


@dataclass(frozen=True)
class TruncatedNormalParams:
    """N(u, scale2) restricted to [lower, upper]."""

    location: float
    scale2: float
    lower: float
    upper: float
    tau: float = field(init=False, repr=False)

    def __post_init__(self):
        vals = (self.location, self.scale2, self.lower, self.upper)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("truncated-normal parameters must be finite")
        if not self.scale2 > 0:
            raise ValueError("scale2 must be positive")
        if not self.lower < self.upper:
            raise ValueError("need lower < upper")
        object.__setattr__(self, "tau", math.sqrt(self.scale2))

    def logpdf(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.array([_special.tn_logpdf(v, self.location, self.tau, self.lower, self.upper) for v in x])

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.lower, self.upper)
        lo = (self.lower - self.location) / self.tau
        hi = (self.upper - self.location) / self.tau
        logz = _special.log_ndtr_diff(lo, hi)
        s = (x - self.location) / self.tau
        out = np.zeros_like(s)
        inside = s > lo
        out[inside] = [np.exp(_special.log_ndtr_diff(lo, v) - logz) for v in s[inside]]
        return out


def _check_sigma_z(z, sigma):
    if not math.isfinite(z):
        raise ValueError("z must be finite")
    if not (math.isfinite(sigma) and sigma > 0):
        raise ValueError("sigma must be positive and finite")


def log_uniform_base_marginal(z, base: UniformBase, sigma=1.0):
    z, sigma = float(z), float(sigma)
    _check_sigma_z(z, sigma)
    return _special.log_uniform_marginal(z, base.lower, base.upper, sigma)


def uniform_base_marginal(z, base: UniformBase, sigma=1.0):
    """Marginal density of Z when mu ~ Unif[a, b] and Z | mu ~ N(mu, sigma^2)."""
    return math.exp(log_uniform_base_marginal(z, base, sigma))


def log_block_marginal_likelihood(zs, base: UniformBase):
    zs = np.asarray(zs, dtype=float).reshape(-1)
    k = zs.size
    if k == 0:
        raise ValueError("empty block")
    if not np.all(np.isfinite(zs)):
        raise ValueError("observations must be finite")
    zbar = zs.mean()
    ss = float(np.sum((zs - zbar) ** 2))
    rk = math.sqrt(k)
    return (-k * _special.HALF_LOG_2PI - 0.5 * ss - math.log(base.width)
            + _special.HALF_LOG_2PI - 0.5 * math.log(k)
            + _special.log_ndtr_diff(rk * (base.lower - zbar), rk * (base.upper - zbar)))


def block_marginal_likelihood(zs, base: UniformBase):
    """Joint density of a block of observations sharing one mu ~ Unif[a, b]."""
    return math.exp(log_block_marginal_likelihood(zs, base))


def truncated_normal_mean(p: TruncatedNormalParams):
    return _special.tn_mean(p.location, p.tau, p.lower, p.upper)


def truncated_normal_sample(p: TruncatedNormalParams, rng, size=None):
    """Inverse-CDF draws; ``rng`` is a ``numpy.random.Generator``."""
    if size is None:
        return _special.tn_sample(p.location, p.tau, p.lower, p.upper, rng)
    return _special.vec_tn_sample(p.location, p.tau, p.lower, p.upper, int(size), rng)


# ---------------------------------------------------------------------------
# CSV I/O


class CsvFormatError(ValueError):
    pass


def read_csv(source, columns):
    """Read numeric columns; ``source`` is a path or a file-like object."""
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return read_csv(fh, columns)
    reader = csv.reader(source)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise CsvFormatError("empty CSV file") from None
    if header != list(columns):
        raise CsvFormatError(f"expected header {','.join(columns)!r}, got {','.join(header)!r}")
    out = {c: [] for c in columns}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(columns):
            raise CsvFormatError(f"line {lineno}: expected {len(columns)} cells, got {len(row)}")
        for c, cell in zip(columns, row):
            try:
                out[c].append(float(cell))
            except ValueError:
                raise CsvFormatError(f"line {lineno}: non-numeric cell {cell.strip()!r}") from None
    return {c: np.array(v, dtype=float) for c, v in out.items()}


def format_float(x):
    return format(float(x), ".17g")


def write_csv(columns: dict, path=None):
    """Write equal-length numeric columns; returns the text when ``path`` is None."""
    buf = io.StringIO()
    names = list(columns)
    buf.write(",".join(names) + "\n")
    for row in zip(*(np.asarray(columns[c]).reshape(-1) for c in names)):
        buf.write(",".join(format_float(v) for v in row) + "\n")
    text = buf.getvalue()
    if path is None:
        return text
    Path(path).write_text(text)
    return text
