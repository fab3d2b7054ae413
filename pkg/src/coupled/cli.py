"""Command-line experiments.  Each subcommand writes a CSV (header plus one row
per configuration, floats at 17 significant digits) and, when writing to a
file, a ``.json`` sidecar echoing the full configuration.

Row ``i`` of every command draws from ``split_stream(RngStream(seed), i)``, so
output depends only on the flags.  Wall-clock columns hold ``nan`` unless
``--timing`` is given, which keeps default output byte-identical across runs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time

import numpy as np

from . import __version__
from .densities import GaussianParams, MultivariateNormal
from .gaussian import gaussian_coupling_bounds, gaussian_dominating_pair
from .mcmc import (
    GibbsTarget,
    Rejection,
    Thorisson,
    gibbs_initial_law,
    gibbs_kernel,
    mala_initial_law,
    mala_kernel,
    measure_meeting_times,
    synthetic_logistic_regression,
)
from .rejection import ensemble_rejection_couple, rejection_couple
from .resampling import (
    CostModelParams,
    ParticleWeights,
    coupled_ensemble_rejection_resample,
    expected_parallel_cost,
    maximal_coupling_mass,
)
from .rng import RngStream, StreamBank, split_stream
from .tails import coupled_tail_sampler, tail_overlap


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return "%.17g" % v
    return str(v)


class Timer:
    def __init__(self, enabled):
        self.enabled = enabled

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start if self.enabled else math.nan
        return False


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return float(np.mean(values)), math.nan
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(values.size))


# --- commands -----------------------------------------------------------------


def cmd_tails(args, root):
    header = ["eta", "empirical_met", "numeric_overlap", "mean_tau", "var_tau", "wall_seconds"]
    samples = args.samples or (10**5 if args.paper_scale else 10**4)
    rows = []
    for i, eta in enumerate(args.etas):
        bank = StreamBank.split(split_stream(root, i), samples)
        with Timer(args.timing) as t:
            draws = coupled_tail_sampler(args.mu, eta, args.n, bank)
        steps = draws.steps.astype(float)
        rows.append([eta, draws.met_rate, tail_overlap(args.mu, eta), steps.mean(), steps.var(ddof=1), t.seconds])
    return header, rows


def resampling_particles(m, rng):
    """Two independent sets of ``m`` standard-normal particle locations."""
    return rng.normal(m), rng.normal(m)


def resampling_weights(locations, y):
    bound = 1.0 / math.sqrt(2.0 * math.pi)
    return ParticleWeights(bound * np.exp(-0.5 * (y - locations) ** 2), bound)


def cmd_resampling(args, root):
    header = ["y", "n", "mean_met", "ci_low", "ci_high", "max_mass", "wall_seconds"]
    m = args.m or (2**14 if args.paper_scale else 2**12)
    reps = args.reps or (100 if args.paper_scale else 10)
    xs, zs = resampling_particles(m, split_stream(root, 0))
    rows = []
    row = 0
    for y in args.ys:
        wx, wz = resampling_weights(xs, y), resampling_weights(zs, y)
        mass = maximal_coupling_mass(wx, wz)
        for n in args.ns:
            row += 1
            base = split_stream(root, row)
            with Timer(args.timing) as t:
                met = [coupled_ensemble_rejection_resample(wx, wz, n, split_stream(base, r)).met_rate for r in range(reps)]
            mean, se = _mean_se(met)
            rows.append([y, n, mean, mean - 1.96 * se, mean + 1.96 * se, mass, t.seconds])
    return header, rows


def _gibbs_couplers(args):
    out = [Rejection(n) for n in args.rejection_ns]
    out += [Thorisson(c) for c in args.thorisson_cs]
    return out


def cmd_gibbs(args, root):
    header = ["d", "coupler", "param", "mean_meeting_time", "mean_wall_seconds", "ci", "censored_fraction"]
    chains = args.reps or (10**4 if args.paper_scale else 10**3)
    rows = []
    row = 0
    for d in args.ds:
        target = GibbsTarget(d)
        for coupler in _gibbs_couplers(args):
            summary = measure_meeting_times(gibbs_kernel(target, coupler), gibbs_initial_law(target), chains,
                                            args.cap, split_stream(root, row))
            row += 1
            wall = float(np.mean(summary.wall_seconds)) if args.timing else math.nan
            rows.append([d, coupler.name, coupler.param, summary.mean, wall, 1.96 * summary.standard_error,
                         summary.censoring_rate])
    return header, rows


def cmd_mala(args, root):
    header = ["n", "mean", "std", "q05", "q50", "q95", "mean_wall", "censored_fraction"]
    runs = args.reps or (10**4 if args.paper_scale else 10**3)
    model = synthetic_logistic_regression(args.dim, args.obs, args.data_seed)
    law = mala_initial_law(model)
    rows = []
    for i, n in enumerate(args.ns):
        summary = measure_meeting_times(mala_kernel(model, args.step_size, n), law, runs, args.cap, split_stream(root, i))
        q = summary.quantiles
        wall = float(np.mean(summary.wall_seconds)) if args.timing else math.nan
        rows.append([n, summary.mean, summary.std, q[0.05], q[0.5], q[0.95], wall, summary.censoring_rate])
    return header, rows


def random_orthogonal(d, rng):
    """Orthogonal factor of the QR decomposition of a standard-normal matrix,
    with column signs fixed by the diagonal of ``R``."""
    q, r = np.linalg.qr(rng.normal(d, d))
    return q * np.sign(np.diag(r))


def gauss_bench_pair(d, rng):
    sp = np.diag(np.arange(1.0, d + 1.0))
    u = random_orthogonal(d, rng)
    sq = u @ sp @ u.T
    return GaussianParams(np.zeros(d), sp), GaussianParams(np.zeros(d), 0.5 * (sq + sq.T))


def cmd_gauss_bench(args, root):
    header = ["pair_id", "strategy", "n", "met_rate", "mean_tau", "lower_bound", "upper_bound"]
    pairs = args.pairs or (200 if args.paper_scale else 20)
    rows = []
    for pid in range(pairs):
        lane = split_stream(root, pid)
        p, q = gauss_bench_pair(args.d, split_stream(lane, 0))
        mp, mq = MultivariateNormal(params=p), MultivariateNormal(params=q)
        sub = 1
        for strategy in ("opt", "max"):
            dom = gaussian_dominating_pair(p, q, strategy)
            bounds = gaussian_coupling_bounds(p, q, dom.sigma_hat)
            for n in args.ns:
                bank = StreamBank.split(split_stream(lane, sub), args.samples)
                sub += 1
                if n == 1:
                    draws = rejection_couple(dom, mp, mq, bank)
                else:
                    draws = ensemble_rejection_couple(dom, mp, mq, n, bank)
                rows.append([pid, strategy, n, draws.met_rate, float(np.mean(draws.steps)), bounds.lower, bounds.upper])
    return header, rows


def cmd_cost_model(args, root):
    header = ["k", "p_rs", "m", "n", "expected_cost"]
    reps = args.reps or (10**5 if args.paper_scale else 10**4)
    rows = []
    row = 0
    for k in args.ks:
        for p in args.ps:
            for m in args.ms:
                for n in args.ns:
                    params = CostModelParams(m, n, k, p)
                    rows.append([k, p, m, n, expected_parallel_cost(params, reps, split_stream(root, row))])
                    row += 1
    return header, rows


# --- argument parsing ---------------------------------------------------------


class OneLineParser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(f"error: usage: {message}\n")
        sys.exit(2)


def _floats(text):
    return [float(v) for v in text.split(",") if v]


def _ints(text):
    return [int(v) for v in text.split(",") if v]


def _common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    p.add_argument("--reps", type=int, default=None, help="replications (command-specific meaning)")
    p.add_argument("--paper-scale", action="store_true", help="use the full experiment sizes")
    p.add_argument("--timing", action="store_true", help="fill wall-clock columns")


def build_parser():
    parser = OneLineParser(prog="coupled", description="Coupled rejection sampling experiments")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=OneLineParser)

    p = sub.add_parser("tails", help="coupled Gaussian tails")
    _common(p)
    p.add_argument("--mu", type=float, default=6.0)
    p.add_argument("--etas", type=_floats, default=[round(6.0 + 0.1 * i, 1) for i in range(11)])
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--samples", type=int, default=None)
    p.set_defaults(func=cmd_tails)

    p = sub.add_parser("resampling", help="coupled rejection resampling")
    _common(p)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--ys", type=_floats, default=[0.0, 1.0, 2.0, 3.0])
    p.add_argument("--ns", type=_ints, default=[1, 8, 64, 128])
    p.set_defaults(func=cmd_resampling)

    p = sub.add_parser("gibbs", help="coupled Gibbs meeting times")
    _common(p)
    p.add_argument("--ds", type=_ints, default=[1, 2, 3, 4])
    p.add_argument("--rejection-ns", type=_ints, default=[1, 16])
    p.add_argument("--thorisson-cs", type=_floats, default=[0.5, 0.7, 0.9, 0.99])
    p.add_argument("--cap", type=int, default=10**4)
    p.set_defaults(func=cmd_gibbs)

    p = sub.add_parser("mala", help="coupled preconditioned MALA meeting times")
    _common(p)
    p.add_argument("--dim", type=int, default=5)
    p.add_argument("--obs", type=int, default=200)
    p.add_argument("--data-seed", type=int, default=20240101)
    p.add_argument("--step-size", type=float, default=1.0)
    p.add_argument("--ns", type=_ints, default=[1, 4, 16, 64])
    p.add_argument("--cap", type=int, default=10**4)
    p.set_defaults(func=cmd_mala)

    p = sub.add_parser("gauss-bench", help="Gaussian coupling benchmark with rotated covariances")
    _common(p)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--pairs", type=int, default=None)
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--ns", type=_ints, default=[1])
    p.set_defaults(func=cmd_gauss_bench)

    p = sub.add_parser("cost-model", help="parallel run-time model")
    _common(p)
    p.add_argument("--ks", type=_floats, default=[0.5, 2.0])
    p.add_argument("--ps", type=_floats, default=[0.05, 0.5])
    p.add_argument("--ms", type=_ints, default=[10, 1000])
    p.add_argument("--ns", type=_ints, default=[2**i for i in range(0, 21, 2)])
    p.set_defaults(func=cmd_cost_model)
    return parser


def render_csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _config(args):
    skip = {"func", "out"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        header, rows = args.func(args, RngStream(args.seed))
        text = render_csv(header, rows)
        if args.out == "-":
            sys.stdout.write(text)
        else:
            with open(args.out, "w", newline="") as fh:
                fh.write(text)
            with open(args.out + ".json", "w") as fh:
                json.dump({"version": __version__, "config": _config(args)}, fh, indent=2, sort_keys=True)
                fh.write("\n")
    except Exception as exc:  # one-line error contract
        msg = " ".join(str(exc).split())
        sys.stderr.write(f"error: {type(exc).__name__}: {msg}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
