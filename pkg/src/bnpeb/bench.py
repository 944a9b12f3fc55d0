"""Monte-Carlo harness for sparse-normal simulation scenarios.

Every replicate draws Z ~ N(mu, I_n) from a seed derived from
(base_seed, scenario id, replicate index) and runs each method on the same Z.
"""

from __future__ import annotations

import configparser
import csv
import io
import logging
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from bnpeb import dpgibbs, npmle, rules
from bnpeb.model import Dataset, MeanVector, format_float

log = logging.getLogger(__name__)

METHODS = ("bnp", "npmle", "oracle", "js", "jsplus")
CI_REPLICATES = 20
FULL_REPLICATES = 100

# Reference unnormalized SSE at n = 1000, keyed by (method, n_nonzero, mu).
REFERENCE_SSE = {}
for _method, _rows in {
    "bnp": ((41, 33, 15, 3), (152, 103, 47, 6), (449, 278, 121, 12)),
    "npmle": ((36, 28, 18, 7), (156, 107, 52, 11), (455, 287, 125, 22)),
    "oracle": ((26, 21, 11, 1), (147, 99, 44, 4), (445, 274, 118, 9)),
}.items():
    for _k, _row in zip((5, 50, 500), _rows):
        for _mu, _v in zip((3, 4, 5, 7), _row):
            REFERENCE_SSE[(_method, _k, _mu)] = _v


@dataclass(frozen=True)
class Scenario:
    n: int = 1000
    n_nonzero: int = 5
    mu: float = 7.0
    replicates: int = CI_REPLICATES
    methods: tuple = ("bnp", "npmle", "oracle")
    base_seed: int = 0

    def __post_init__(self):
        if not self.n >= 1:
            raise ValueError("n must be positive")
        if not 0 <= self.n_nonzero <= self.n:
            raise ValueError("need 0 <= n_nonzero <= n")
        if self.replicates < 1:
            raise ValueError("replicates must be positive")
        methods = tuple(self.methods)
        if not methods:
            raise ValueError("methods must be nonempty")
        unknown = set(methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        object.__setattr__(self, "methods", methods)

    @property
    def scenario_id(self):
        return f"n{self.n}-k{self.n_nonzero}-mu{self.mu:g}"

    def means(self):
        m = np.zeros(self.n)
        m[: self.n_nonzero] = self.mu
        return m

    def replicate_seeds(self, r):
        """(data seed sequence, sampler seed) for replicate r."""
        key = zlib.crc32(self.scenario_id.encode())
        ss = np.random.SeedSequence(self.base_seed, spawn_key=(key, r))
        data_ss, bnp_ss = ss.spawn(2)
        return data_ss, int(bnp_ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class MethodStats:
    mean_sse: float
    se_sse: float
    mean_time: float
    n_ok: int
    n_failed: int


@dataclass
class ScenarioResult:
    scenario: Scenario
    sse: dict = field(default_factory=dict)      # method -> per-replicate SSE (nan = failed)
    times: dict = field(default_factory=dict)    # method -> per-replicate seconds
    errors: dict = field(default_factory=dict)   # method -> list of error strings

    def stats(self, method) -> MethodStats:
        s = np.asarray(self.sse[method], dtype=float)
        t = np.asarray(self.times[method], dtype=float)
        ok = np.isfinite(s)
        k = int(ok.sum())
        mean = float(s[ok].mean()) if k else math.nan
        se = float(s[ok].std(ddof=1) / math.sqrt(k)) if k > 1 else math.nan
        mt = float(t[ok].mean()) if k else math.nan
        return MethodStats(mean, se, mt, k, int(s.size - k))

    def regret(self, method, baseline="oracle"):
        """Mean per-coordinate excess SSE of ``method`` over ``baseline`` and its SE."""
        d = (np.asarray(self.sse[method]) - np.asarray(self.sse[baseline])) / self.scenario.n
        d = d[np.isfinite(d)]
        return float(d.mean()), float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else math.nan


def run_method(method, data: Dataset, mu, bnp_seed, dp_config=None, npmle_config=None) -> MeanVector:
    if method == "bnp":
        cfg = replace(dp_config or dpgibbs.DpConfig(), seed=bnp_seed)
        return dpgibbs.estimate(data, cfg).mean
    if method == "npmle":
        return npmle.plugin_rule(data, npmle_config or npmle.NpmleConfig())
    if method == "oracle":
        return rules.oracle_rule(MeanVector(mu), data)
    if method == "js":
        return rules.james_stein(data, positive_part=False)
    if method == "jsplus":
        return rules.james_stein(data, positive_part=True)
    raise ValueError(f"unknown method {method!r}")


def run_replicate(scenario: Scenario, r, dp_config=None, npmle_config=None):
    """Returns {method: (sse, seconds, error_or_None)} for replicate r."""
    data_ss, bnp_seed = scenario.replicate_seeds(r)
    mu = scenario.means()
    z = mu + np.random.default_rng(data_ss).standard_normal(scenario.n)
    data = Dataset(z)
    out = {}
    for method in scenario.methods:
        t0 = time.perf_counter()
        try:
            est = run_method(method, data, mu, bnp_seed, dp_config, npmle_config)
            elapsed = time.perf_counter() - t0
            out[method] = (float(np.sum((est.mu - mu) ** 2)), elapsed, None)
        except Exception as exc:  # recorded as a missing cell
            out[method] = (math.nan, math.nan, f"replicate {r}: {type(exc).__name__}: {exc}")
    return out


def _run_replicate_args(args):
    return run_replicate(*args)


def run_scenario(s: Scenario, dp_config=None, npmle_config=None, workers=1) -> ScenarioResult:
    tasks = [(s, r, dp_config, npmle_config) for r in range(s.replicates)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reps = list(pool.map(_run_replicate_args, tasks))
    else:
        reps = [_run_replicate_args(t) for t in tasks]
    res = ScenarioResult(s)
    for m in s.methods:
        res.sse[m] = np.array([rep[m][0] for rep in reps])
        res.times[m] = np.array([rep[m][1] for rep in reps])
        errs = [rep[m][2] for rep in reps if rep[m][2] is not None]
        if errs:
            res.errors[m] = errs
            log.warning("%s/%s: %d failed replicates", s.scenario_id, m, len(errs))
    return res


def sparse_grid_scenarios(replicates=CI_REPLICATES, methods=("bnp", "npmle", "oracle"), base_seed=0, n=1000):
    return [Scenario(n, k, float(mu), replicates, tuple(methods), base_seed)
            for k in (5, 50, 500) for mu in (3, 4, 5, 7)]


# ---------------------------------------------------------------------------
# scenario files


_SCENARIO_KEYS = {"n", "n_nonzero", "mu", "replicates", "methods", "base_seed"}


def parse_scenarios(text, full=False):
    """Parse INI-style stanzas, one ``[name]`` section per scenario.

    Missing ``replicates`` defaults to the CI profile; ``full`` forces the
    full 100-replicate profile.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read_string(text)
    out = []
    for name in cp.sections():
        sec = cp[name]
        unknown = set(sec) - _SCENARIO_KEYS
        if unknown:
            raise ValueError(f"[{name}]: unknown keys {sorted(unknown)}")
        try:
            reps = FULL_REPLICATES if full else sec.getint("replicates", CI_REPLICATES)
            methods = tuple(m.strip() for m in sec.get("methods", "bnp,npmle,oracle").split(",") if m.strip())
            out.append(Scenario(
                n=sec.getint("n", 1000),
                n_nonzero=sec.getint("n_nonzero"),
                mu=sec.getfloat("mu"),
                replicates=reps,
                methods=methods,
                base_seed=sec.getint("base_seed", 0),
            ))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"[{name}]: {exc}") from None
    if not out:
        raise ValueError("scenario file defines no scenarios")
    return out


def load_scenarios(path, full=False):
    p = Path(path)
    if not p.exists() and str(path) == "sparse-grid":
        p = Path(__file__).with_name("data") / "sparse_grid.ini"
    return parse_scenarios(p.read_text(), full=full)


# ---------------------------------------------------------------------------
# reports


CSV_FIELDS = ("scenario_id", "n", "n_nonzero", "mu", "replicates", "method",
              "mean_sse", "se_sse", "mean_time", "n_ok", "n_failed")


def summary_rows(results):
    rows = []
    for res in results:
        s = res.scenario
        for m in s.methods:
            st = res.stats(m)
            rows.append({"scenario_id": s.scenario_id, "n": s.n, "n_nonzero": s.n_nonzero,
                         "mu": float(s.mu), "replicates": s.replicates, "method": m,
                         "mean_sse": st.mean_sse, "se_sse": st.se_sse, "mean_time": st.mean_time,
                         "n_ok": st.n_ok, "n_failed": st.n_failed})
    return rows


def _csv(results):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for row in summary_rows(results):
        w.writerow([format_float(v) if isinstance(v, float) else v for v in (row[f] for f in CSV_FIELDS)])
    return buf.getvalue()


def parse_results_csv(text):
    ints = {"n", "n_nonzero", "replicates", "n_ok", "n_failed"}
    floats = {"mu", "mean_sse", "se_sse", "mean_time"}
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append({k: int(v) if k in ints else float(v) if k in floats else v for k, v in rec.items()})
    return rows


LABELS = {"bnp": "BNP", "npmle": "NPMLE", "oracle": "Oracle", "js": "JS", "jsplus": "JS+"}


def _grid(results, cell):
    """Methods as rows, (n_nonzero, mu) as columns; three header rows."""
    scen = [r.scenario for r in results]
    methods = []
    for s in scen:
        methods.extend(m for m in s.methods if m not in methods)
    lines = ["| " + " | ".join(["# nonzero"] + [str(s.n_nonzero) for s in scen]) + " |",
             "|" + "|".join(["---"] + ["---:"] * len(scen)) + "|",
             "| " + " | ".join(["μ"] + [f"{s.mu:g}" for s in scen]) + " |"]
    if len({s.n for s in scen}) > 1:
        lines.append("| " + " | ".join(["n"] + [str(s.n) for s in scen]) + " |")
    for m in methods:
        cells = [cell(r, m) if m in r.scenario.methods else "" for r in results]
        lines.append("| " + " | ".join([LABELS[m]] + cells) + " |")
    ns = sorted({s.n for s in scen})
    if len(ns) == 1:
        lines.append(f"\nn = {ns[0]}, replicates = {'/'.join(sorted({str(s.replicates) for s in scen}))}")
    return "\n".join(lines) + "\n"


def _risk_cell(res, m):
    st = res.stats(m)
    if st.n_ok == 0:
        return "missing"
    txt = f"{st.mean_sse:.1f} ± {st.se_sse:.1f}" if st.n_ok > 1 else f"{st.mean_sse:.1f}"
    return txt + (f" ({st.n_failed} failed)" if st.n_failed else "")


def _time_cell(res, m):
    st = res.stats(m)
    return "missing" if st.n_ok == 0 else f"{st.mean_time:.3f}"


def report(results, fmt="markdown"):
    """Render results as ``markdown`` (risk grid), ``timing`` (wall-time grid) or ``csv``."""
    results = list(results)
    if not results:
        raise ValueError("no results to report")
    if fmt == "csv":
        return _csv(results)
    if fmt == "markdown":
        return _grid(results, _risk_cell)
    if fmt == "timing":
        return _grid(results, _time_cell)
    raise ValueError(f"unknown report format {fmt!r}")
