"""Command-line entry point.

Exit codes: 0 success, 1 usage or validation error, 2 I/O error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import warnings
from pathlib import Path

import numpy as np

from . import experiment as exp
from .elicitation import DEFAULT_STRATEGIES, Strategy, StrategySpec, estimate_theorem_conditions
from .plotting import write_plots
from .realdata import ParseError
from .regression import ConvergenceWarning, LassoConfig, fit_lasso, fit_lasso_cv, lambda_max
from .synthgen import SyntheticConfig, resampling_generator

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _list(cast):
    def parse(text):
        try:
            values = [cast(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
        if not values:
            raise argparse.ArgumentTypeError("empty list")
        return values
    return parse


def _names(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _shared(p: argparse.ArgumentParser, out_required=True):
    p.add_argument("--seed", type=int, default=0, help="master seed for all randomness (default 0)")
    p.add_argument("--reps", type=int, default=100, help="repetitions per curve point (default 100)")
    p.add_argument("--budget", type=int, default=10, help="largest feedback budget (default 10)")
    p.add_argument("--workers", type=int, default=1, help="worker processes; never changes results (default 1)")
    p.add_argument("-o", "--out", required=out_required, help="results CSV path")
    p.add_argument("--plot", action="store_true", help="also write one SVG chart per (n, noise, fraction) cell")


def _real_inputs(p: argparse.ArgumentParser):
    p.add_argument("--expr", required=True, help="expression CSV")
    p.add_argument("--resp", required=True, help="response CSV (cell_line,drug,log_ic50)")
    p.add_argument("--genes", help="gene filter file, one gene id per line")
    p.add_argument("--cache", required=True, help="pseudo-ground-truth cache directory")
    p.add_argument("--drugs", type=_names, help="comma-separated drug ids (default: all)")
    p.add_argument("--cells", type=_names, help="comma-separated cell line ids (default: all)")
    p.add_argument("--per-drug", action="store_true",
                   help="one pseudo-ground truth per drug instead of leave-one-out per cell line")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="expert-elicit", description="Budgeted expert feedback for small-n regression.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run-synthetic", help="loss curves on synthetic data")
    _shared(p)
    p.add_argument("--scenario", choices=["shared", "per-patient"], default="shared",
                   help="one weight vector for everyone, or one per patient (default shared)")
    p.add_argument("--n", type=_list(int), default=[5, 10, 15, 20, 25, 30],
                   help="training sizes (default 5,10,15,20,25,30)")
    p.add_argument("--p", type=int, default=150, help="number of features (default 150)")
    p.add_argument("--sparsity", type=int, default=5, help="nonzero weights (default 5)")
    p.add_argument("--pool", type=int, default=1000, help="feature pool rows (default 1000)")
    p.add_argument("--noise", type=_list(float), default=[0.0], help="expert noise variances (default 0)")
    p.add_argument("--obs-noise", type=float, default=1.0, help="observation noise variance (default 1)")
    p.add_argument("--subset", type=_list(float), default=None,
                   help="expert knowledge fractions; adds the mask-aware largest-product strategy")
    p.add_argument("--theta-dist", type=float, default=0.5,
                   help="bound on pairwise weight distance, per-patient scenario (default 0.5)")
    p.add_argument("--target-mode", choices=["fresh", "pool"], default="fresh",
                   help="target drawn fresh or from a held-out pool row (default fresh)")
    p.add_argument("--features", choices=["normal", "uniform"], default="normal",
                   help="feature distribution: standard normal or uniform on [0, 1] (default normal)")
    p.add_argument("--strategies", type=_names, default=None,
                   help="comma-separated strategy names (default: all four)")

    p = sub.add_parser("run-real", help="loss curves on expression/response data")
    _shared(p)
    _real_inputs(p)
    p.add_argument("--n", type=_list(int), default=[5, 10, 15, 20, 25, 30],
                   help="training sizes (default 5,10,15,20,25,30)")
    p.add_argument("--drugs-per-rep", type=int, default=10, help="drugs per repetition (default 10)")
    p.add_argument("--cells-per-rep", type=int, default=10, help="target cell lines per repetition (default 10)")
    p.add_argument("--sem-over", choices=["iterations", "pairs"], default="iterations",
                   help="standard error across repetitions or across all target pairs")
    p.add_argument("--noise", type=_list(float), default=[0.0], help="expert noise variances (default 0)")

    p = sub.add_parser("learn-ground-truth", help="fit and cache pseudo-ground-truth weights")
    _real_inputs(p)
    p.add_argument("--seed", type=int, default=0, help="CV fold seed (default 0)")
    p.add_argument("--n", type=_list(int), default=None, help="accepted for symmetry with run-real; unused")

    p = sub.add_parser("check-theorem", help="Monte-Carlo check of single-replacement optimality")
    p.add_argument("--scenario", choices=["shared", "per-patient"], default="shared")
    p.add_argument("--p", type=int, default=150, help="number of features (default 150)")
    p.add_argument("--sparsity", type=int, default=5, help="nonzero weights (default 5)")
    p.add_argument("--pool", type=int, default=1000, help="feature pool rows (default 1000)")
    p.add_argument("--n", type=int, default=10, help="training size per resample (default 10)")
    p.add_argument("--obs-noise", type=float, default=1.0, help="observation noise variance (default 1)")
    p.add_argument("--theta-dist", type=float, default=0.5, help="pairwise weight bound (default 0.5)")
    p.add_argument("--resamples", type=int, default=1000, help="training sets to draw (default 1000)")
    p.add_argument("--estimator", choices=["cv", "fixed"], default="cv",
                   help="CV-tuned lasso, or lasso at --lambda-ratio * lambda_max (default cv)")
    p.add_argument("--lambda-ratio", type=float, default=0.1, help="penalty ratio for --estimator fixed")
    p.add_argument("--seed", type=int, default=0, help="seed (default 0)")
    p.add_argument("-o", "--out", help="per-feature report CSV")

    p = sub.add_parser("plot", help="SVG charts from a results CSV")
    p.add_argument("--results", required=True, help="results CSV written by run-synthetic/run-real")
    p.add_argument("-o", "--out", required=True, help="output path prefix for SVG files")
    return parser


def _check_common(args):
    if args.reps < 2:
        raise UsageError("--reps must be at least 2")
    if args.budget < 0:
        raise UsageError("--budget must be nonnegative")
    if args.workers < 1:
        raise UsageError("--workers must be positive")


def _strategies(names, subset):
    if names:
        try:
            specs = [StrategySpec.from_name(n) for n in names]
        except ValueError as e:
            raise UsageError(f"unknown strategy: {e}") from None
    else:
        specs = list(DEFAULT_STRATEGIES)
        if subset:
            specs.append(StrategySpec(Strategy.LARGEST_PRODUCT, respect_mask=True))
    return tuple(specs)


def _finish(curves, args):
    exp.write_results(curves, args.out)
    print(f"wrote {sum(len(c.points) for c in curves)} rows to {args.out}")
    if args.plot:
        prefix = Path(args.out).with_suffix("")
        for path in write_plots(curves, prefix):
            print(f"wrote {path}")


def cmd_run_synthetic(args):
    _check_common(args)
    try:
        synth = SyntheticConfig(
            pool_size=args.pool, p=args.p, s=args.sparsity, n_train=min(args.n),
            obs_noise_variance=args.obs_noise, scenario=args.scenario,
            max_pairwise_theta_distance=args.theta_dist, seed=args.seed,
            target_mode=args.target_mode, features=args.features,
        )
        config = exp.ExperimentConfig(
            synthetic=synth, n_train_grid=tuple(args.n), budget_max=args.budget,
            strategies=_strategies(args.strategies, args.subset),
            noise_grid=tuple(args.noise), knowledge_grid=tuple(args.subset or [1.0]),
            repetitions=args.reps, master_seed=args.seed, workers=args.workers,
        )
        config.validate()
    except ValueError as e:
        raise UsageError(str(e)) from None
    _finish(exp.run_experiment(config), args)


def _load_real(args):
    from . import realdata as rd

    expr = rd.load_expression(args.expr)
    if args.genes:
        expr = expr.select_genes(rd.load_gene_filter(args.genes))
    resp = rd.load_responses(args.resp)
    drugs = args.drugs or resp.drugs
    known = set(resp.drugs)
    for d in drugs:
        if d not in known:
            raise UsageError(f"drug {d!r} not found in {args.resp}")
    cells = args.cells or list(expr.cell_line_ids)
    for c in cells:
        if c not in expr:
            raise UsageError(f"cell line {c!r} not found in {args.expr}")
    return expr, resp, drugs, cells


def cmd_learn_ground_truth(args):
    from . import realdata as rd

    expr, resp, drugs, cells = _load_real(args)
    try:
        pgt = rd.learn_all(expr, resp, drugs, cells, seed=args.seed, per_drug=args.per_drug)
    except (KeyError, ValueError) as e:
        raise UsageError(str(e)) from None
    for path in pgt.save(args.cache):
        print(f"wrote {path}")


def cmd_run_real(args):
    from . import realdata as rd

    _check_common(args)
    expr, resp, drugs, cells = _load_real(args)
    try:
        pgt = rd.PseudoGroundTruth.load(args.cache)
    except FileNotFoundError as e:
        raise FileNotFoundError(f"{e}; run 'expert-elicit learn-ground-truth' first") from None
    if pgt.gene_ids != expr.gene_ids:
        raise UsageError("cache genes differ from the expression table; rerun learn-ground-truth "
                         "with the same --genes filter")
    for d in drugs:
        for c in cells:
            if c in resp.for_drug(d):
                try:
                    pgt.get(d, c)
                except KeyError as e:
                    raise UsageError(f"{e.args[0]}; rerun learn-ground-truth") from None
    # Target pairs need a response (for leave-one-out truth) in every drug drawn.
    usable = [c for c in cells if all(c in resp.for_drug(d) for d in drugs)]
    if not usable:
        raise UsageError("no cell line has responses for every requested drug")
    try:
        config = exp.ExperimentConfig(
            real=exp.RealDataSource(expr, resp, pgt, tuple(drugs), tuple(usable),
                                    args.drugs_per_rep, args.cells_per_rep, args.sem_over),
            n_train_grid=tuple(args.n), budget_max=args.budget,
            noise_grid=tuple(args.noise), repetitions=args.reps,
            master_seed=args.seed, workers=args.workers,
        )
        config.validate()
    except ValueError as e:
        raise UsageError(str(e)) from None
    try:
        curves = exp.run_experiment(config)
    except ValueError as e:
        raise UsageError(str(e)) from None
    _finish(curves, args)


def theorem_report_csv(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "is_c", "mean_delta", "second_moment", "product_variance",
                "replacement_loss_mean", "replacement_loss_sem", "gap_vs_c_mean", "gap_vs_c_sem"])
    for i in range(report.second_moments.shape[0]):
        w.writerow([i, int(i == report.c), repr(float(report.delta_mean[i])),
                    repr(float(report.second_moments[i, i])), repr(float(report.product_variance[i])),
                    repr(float(report.replacement_loss_mean[i])), repr(float(report.replacement_loss_sem[i])),
                    repr(float(report.loss_gap_mean[i])), repr(float(report.loss_gap_sem[i]))])
    return buf.getvalue()


def cmd_check_theorem(args):
    if args.resamples < 2:
        raise UsageError("--resamples must be at least 2 (standard error undefined otherwise)")
    try:
        config = SyntheticConfig(
            pool_size=args.pool, p=args.p, s=args.sparsity, n_train=args.n,
            obs_noise_variance=args.obs_noise, scenario=args.scenario,
            max_pairwise_theta_distance=args.theta_dist, seed=args.seed,
        )
    except ValueError as e:
        raise UsageError(str(e)) from None
    if args.estimator == "fixed":
        def estimator(d):
            return fit_lasso(d, LassoConfig(lam=args.lambda_ratio * lambda_max(d))).weights
    else:
        if args.n < 2:
            raise UsageError("--estimator cv needs --n >= 2")

        def estimator(d):
            return fit_lasso_cv(d, args.seed)[0].weights
    generator, target = resampling_generator(config)
    report = estimate_theorem_conditions(generator, target, args.resamples, args.seed, estimator)
    verdict = "HOLD" if report.conditions_hold else "DO NOT HOLD"
    if report.vacuous:
        verdict += " (vacuous: single feature)"
    print(f"resamples: {report.num_resamples}")
    print(f"largest-product feature c (modal): {report.c} "
          f"({report.c_counts.get(report.c, 0)}/{report.num_resamples} resamples)")
    print(f"variance condition: {'yes' if report.variance_condition else 'no'}")
    print(f"cross-moment condition: {'yes' if report.cross_condition else 'no'}")
    print(f"conditions: {verdict}")
    print(f"loss ordering (replacing c is best within 2 SE): "
          f"{'MATCHED' if report.ordering_holds else 'NOT MATCHED'}")
    for note in report.notes:
        print(f"note: {note}")
    if args.out:
        Path(args.out).write_text(theorem_report_csv(report))
        print(f"wrote {args.out}")


def cmd_plot(args):
    curves = exp.read_results(args.results)
    if not curves:
        raise UsageError(f"{args.results} has no rows")
    for path in write_plots(curves, args.out):
        print(f"wrote {path}")


COMMANDS = {
    "run-synthetic": cmd_run_synthetic,
    "run-real": cmd_run_real,
    "learn-ground-truth": cmd_learn_ground_truth,
    "check-theorem": cmd_check_theorem,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            COMMANDS[args.command](args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
