"""Command-line entry point: ``bnpeb denoise|simulate|diagnose|exact``.

Exit status: 0 on success, 2 on usage errors, 1 on runtime failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from bnpeb import __version__, bench, divergence, dpgibbs, exactdp, npmle, rules
from bnpeb.model import (CsvFormatError, Dataset, DiscreteMixingMeasure, MeanVector,
                         UniformBase, format_float, read_csv, write_csv)

log = logging.getLogger("bnpeb")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _base(text):
    try:
        return UniformBase.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text}")
    return v


def build_parser():
    p = _Parser(prog="bnpeb", description="Empirical Bayes denoising in the Gaussian sequence model.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="{denoise,simulate,diagnose,exact}", parser_class=_Parser)

    d = sub.add_parser("denoise", help="estimate mu from z.csv")
    d.add_argument("--method", required=True, choices=bench.METHODS)
    d.add_argument("--input", required=True, help="CSV with header z")
    d.add_argument("--output", required=True, help="CSV with header z,mu_hat")
    d.add_argument("--seed", type=_nonneg_int, default=0)
    d.add_argument("--burnin", type=_nonneg_int, default=2000)
    d.add_argument("--sweeps", type=_positive_int, default=10000)
    d.add_argument("--alpha-fixed", type=float)
    d.add_argument("--alpha-shape", type=float)
    d.add_argument("--alpha-scale", type=float)
    d.add_argument("--base", type=_base, default=UniformBase())
    d.add_argument("--grid", type=_positive_int, default=300, help="NPMLE grid atoms")
    d.add_argument("--support-bound", type=float)
    d.add_argument("--prior-out", help="write the fitted NPMLE measure (atom,weight)")
    d.add_argument("--truth", help="CSV with header mu, required by the oracle method")

    s = sub.add_parser("simulate", help="run Monte-Carlo scenarios")
    s.add_argument("--config", required=True, help="scenario file, or 'sparse-grid' for the bundled preset")
    s.add_argument("--out", required=True, help="results CSV")
    s.add_argument("--full", action="store_true", help="100 replicates per scenario")
    s.add_argument("--workers", type=_positive_int, default=1)
    s.add_argument("--seed", type=_nonneg_int, help="override base_seed of every scenario")
    s.add_argument("--burnin", type=_nonneg_int, default=2000)
    s.add_argument("--sweeps", type=_positive_int, default=10000)

    g = sub.add_parser("diagnose", help="Hellinger, KL and Fisher divergence between two mixtures")
    g.add_argument("--g", required=True, help="CSV with header atom,weight")
    g.add_argument("--q", required=True, help="CSV with header atom,weight")

    e = sub.add_parser("exact", help="exact DP posterior mean by partition enumeration (n <= 12)")
    e.add_argument("--input", required=True)
    e.add_argument("--alpha", type=float, required=True)
    e.add_argument("--base", type=_base, default=UniformBase())
    e.add_argument("--output", help="write z,mu_hat here instead of stdout")
    return p


def _dp_config(args):
    if args.alpha_fixed is not None and (args.alpha_shape is not None or args.alpha_scale is not None):
        raise UsageError("bnpeb denoise: --alpha-fixed conflicts with --alpha-shape/--alpha-scale")
    kw = {}
    if args.alpha_shape is not None:
        kw["alpha_shape"] = args.alpha_shape
    if args.alpha_scale is not None:
        kw["alpha_scale"] = args.alpha_scale
    try:
        return dpgibbs.DpConfig(base=args.base, alpha_fixed=args.alpha_fixed, burn_in_sweeps=args.burnin,
                                sample_sweeps=args.sweeps, seed=args.seed, **kw)
    except ValueError as exc:
        raise UsageError(f"bnpeb denoise: {exc}") from None


def _npmle_config(args):
    try:
        return npmle.NpmleConfig(grid_atoms=args.grid, support_bound=args.support_bound)
    except ValueError as exc:
        raise UsageError(f"bnpeb denoise: {exc}") from None


def cmd_denoise(args):
    if args.method == "oracle" and args.truth is None:
        raise UsageError("bnpeb denoise: --method oracle requires --truth")
    if args.prior_out is not None and args.method != "npmle":
        raise UsageError("bnpeb denoise: --prior-out only applies to --method npmle")
    dp_cfg = _dp_config(args) if args.method == "bnp" else None
    np_cfg = _npmle_config(args) if args.method == "npmle" else None
    data = Dataset.from_csv(args.input)
    if args.method == "bnp":
        est = dpgibbs.estimate(data, dp_cfg).mean
    elif args.method == "npmle":
        fitted = npmle.fit(data, np_cfg)
        est = rules.separable_apply(fitted.measure, data)
        if args.prior_out:
            fitted.measure.to_csv(args.prior_out)
    elif args.method == "oracle":
        mu = read_csv(args.truth, ["mu"])["mu"]
        est = rules.oracle_rule(MeanVector(mu), data)
    else:
        if len(data) < 3:
            raise RuntimeError(f"James-Stein needs n >= 3 to dominate the MLE; refusing n = {len(data)}")
        est = rules.james_stein(data, positive_part=args.method == "jsplus")
    write_csv({"z": data.z, "mu_hat": est.mu}, args.output)
    return 0


def cmd_simulate(args):
    scenarios = bench.load_scenarios(args.config, full=args.full)
    if args.seed is not None:
        scenarios = [replace(s, base_seed=args.seed) for s in scenarios]
    dp_cfg = dpgibbs.DpConfig(burn_in_sweeps=args.burnin, sample_sweeps=args.sweeps)
    results = []
    for s in scenarios:
        log.info("running %s (%d replicates)", s.scenario_id, s.replicates)
        results.append(bench.run_scenario(s, dp_config=dp_cfg, workers=args.workers))
    Path(args.out).write_text(bench.report(results, "csv"))
    sys.stdout.write(bench.report(results, "markdown") + "\n" + bench.report(results, "timing"))
    for r in results:
        for m, errs in r.errors.items():
            for msg in errs:
                sys.stderr.write(f"{r.scenario.scenario_id}/{m}: {msg}\n")
    return 0


def cmd_diagnose(args):
    g = DiscreteMixingMeasure.from_csv(args.g)
    q = DiscreteMixingMeasure.from_csv(args.q)
    d = divergence.diagnose(g, q)
    sys.stdout.write("hellinger,kl,fisher\n")
    sys.stdout.write(",".join(format_float(d[k]) for k in ("hellinger", "kl", "fisher")) + "\n")
    return 0


def cmd_exact(args):
    if not args.alpha > 0:
        raise UsageError("bnpeb exact: --alpha must be positive")
    data = Dataset.from_csv(args.input)
    est = exactdp.exact_posterior_mean(data, args.alpha, args.base)
    text = write_csv({"z": data.z, "mu_hat": est.mu}, args.output)
    if text is not None:
        sys.stdout.write(text)
    return 0


COMMANDS = {"denoise": cmd_denoise, "simulate": cmd_simulate, "diagnose": cmd_diagnose, "exact": cmd_exact}


def _join_negative_values(argv):
    # "--base -10,10" would otherwise read as an unknown option
    out, it = [], iter(argv)
    for tok in it:
        if tok == "--base":
            nxt = next(it, None)
            out.append(tok if nxt is None else f"--base={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None):
    parser = build_parser()
    argv = _join_negative_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("bnpeb: missing subcommand (choose from denoise, simulate, diagnose, exact)")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return 2
    except CsvFormatError as exc:
        sys.stderr.write(f"bnpeb: malformed CSV: {exc}\n")
        return 1
    except FileNotFoundError as exc:
        sys.stderr.write(f"bnpeb: file not found: {exc.filename}\n")
        return 1
    except exactdp.ExactSizeError as exc:
        sys.stderr.write(f"bnpeb: {exc}\n")
        return 1
    except (ValueError, RuntimeError, OSError) as exc:
        sys.stderr.write(f"bnpeb: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
