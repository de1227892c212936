"""Command-line interface: synth, fit, similarity, cluster, evaluate, experiment.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from .clustering import (
    ClusterAssignment,
    hierarchical_average_linkage,
    knn_graph,
    spectral_cluster,
)
from .errors import DataError, NumericalError, TcsimError, UsageError
from .evaluation import bhi_zscore, nmi
from .experiment import (
    CLUSTERERS,
    parse_experiment_spec,
    run_experiment,
    write_results_csv,
    write_summary_csv,
)
from .gp import FittedModel, OptimizerConfig, fit_shared_hyperparams
from .similarity import MEASURES, SimilarityMatrix, pairwise_matrix, to_dissimilarity
from .synthdata import SAMPLINGS, SynthConfig, generate
from .timecourse import (
    center_dataset,
    common_grid,
    normalize_times,
    read_dataset,
    write_long,
    write_wide,
)


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through the package's own
    error type (exit code 1) instead of calling sys.exit(2)."""

    def error(self, message):
        raise UsageError(message)


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("TCSIM_JOBS", "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="tcsim",
        description="GP-based similarity and clustering for sparse time courses.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--sampling", choices=SAMPLINGS, default="even")
    p.add_argument("--noise", type=float, default=0.08, help="noise std (default 0.08)")
    p.add_argument("--n-per-profile", type=int, default=50)
    p.add_argument("--length", type=int, default=15)
    p.add_argument("--dropout", default="6,7,8", help="async dropout counts, comma-separated")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="dataset CSV path")
    p.add_argument("--truth", help="optional ground-truth labels CSV path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit shared GP hyperparameters to a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--output", required=True, help="model file path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=200)
    _add_preprocess_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("similarity", help="compute a pairwise score matrix")
    p.add_argument("--data", required=True)
    p.add_argument("--measure", required=True, choices=MEASURES)
    p.add_argument("--model", help="model file (required for gp and bregman)")
    p.add_argument("--output", required=True)
    _add_preprocess_flags(p)
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("cluster", help="cluster a score matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--method", required=True, choices=CLUSTERERS)
    p.add_argument("--k", type=int, default=3, help="number of clusters")
    p.add_argument("--knn", type=int, default=7, help="kNN graph degree (spectral)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("evaluate", help="score a clustering (NMI or BHI z-score)")
    p.add_argument("--labels", required=True)
    p.add_argument("--truth", help="ground-truth labels CSV (NMI)")
    p.add_argument("--bio", help="external similarity matrix CSV (BHI z-score)")
    p.add_argument("--n-random", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="optional CSV output path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="run a repeated benchmark from a spec file")
    p.add_argument("--spec", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--jobs", type=int, default=_default_jobs(), help="parallel repeats (default $TCSIM_JOBS or 1)")
    p.add_argument("--repeats", type=int, help="override the spec's repeat count")
    p.add_argument("--seed", type=int, help="override the spec's seed")
    p.set_defaults(func=cmd_experiment)

    return parser


def _add_preprocess_flags(p):
    p.add_argument("--center", action="store_true", help="subtract each course's mean value")
    p.add_argument(
        "--normalize-time",
        action="store_true",
        help="affinely rescale all time stamps to span [0, 1]",
    )


def _load_dataset(args):
    dataset = read_dataset(args.data)
    if args.normalize_time:
        dataset = normalize_times(dataset)
    if args.center:
        dataset = center_dataset(dataset)
    return dataset


def cmd_synth(args) -> None:
    try:
        dropout = tuple(int(v) for v in args.dropout.split(",") if v.strip())
    except ValueError as exc:
        raise UsageError(f"bad --dropout value {args.dropout!r}: {exc}") from exc
    config = SynthConfig(
        n_per_profile=args.n_per_profile,
        length=args.length,
        noise_std=args.noise,
        sampling=args.sampling,
        dropout_counts=dropout,
        seed=args.seed,
    )
    courses, truth = generate(config)
    if common_grid(courses) is not None:
        write_wide(args.output, courses)
    else:
        write_long(args.output, courses)
    if args.truth:
        truth.save(args.truth)
    print(f"wrote {len(courses)} courses to {args.output}")


def cmd_fit(args) -> None:
    dataset = _load_dataset(args)
    config = OptimizerConfig(
        n_restarts=args.restarts, max_iter=args.max_iter, seed=args.seed
    )
    model = fit_shared_hyperparams(dataset, config)
    model.save(args.output)
    hp = model.hyperparams
    print(
        f"fitted lengthscale={hp.lengthscale:.6g} signal_std={hp.signal_std:.6g} "
        f"noise_std={hp.noise_std:.6g} objective={model.objective:.6g}"
    )


def cmd_similarity(args) -> None:
    dataset = _load_dataset(args)
    model = None
    if args.measure in ("gp", "bregman"):
        if not args.model:
            raise UsageError(f"--model is required for measure {args.measure!r}")
        model = FittedModel.load(args.model)
    matrix = pairwise_matrix(dataset, args.measure, model)
    matrix.save(args.output)
    print(f"wrote {len(matrix)}x{len(matrix)} {args.measure} matrix to {args.output}")


def cmd_cluster(args) -> None:
    matrix = SimilarityMatrix.load(args.matrix)
    if args.method == "spectral":
        assignment = spectral_cluster(knn_graph(matrix, args.knn), args.k, args.seed)
    else:
        assignment = hierarchical_average_linkage(to_dissimilarity(matrix), args.k)
    assignment.save(args.output)
    print(f"wrote {args.k}-cluster labels to {args.output}")


def _align_to(reference_ids, other: ClusterAssignment) -> ClusterAssignment:
    """Reorder a labeled assignment to match a reference id order."""
    if other.ids is None or tuple(other.ids) == tuple(reference_ids):
        return other
    position = {sid: i for i, sid in enumerate(other.ids)}
    try:
        order = [position[sid] for sid in reference_ids]
    except KeyError as exc:
        raise DataError(f"series id {exc.args[0]!r} missing from one input") from exc
    return ClusterAssignment(other.labels[order], other.k, tuple(reference_ids))


def cmd_evaluate(args) -> None:
    labels = ClusterAssignment.load(args.labels)
    if (args.truth is None) == (args.bio is None):
        raise UsageError("provide exactly one of --truth (NMI) or --bio (BHI z-score)")
    if args.truth:
        truth = _align_to(labels.ids, ClusterAssignment.load(args.truth))
        metric, value = "nmi", nmi(labels, truth)
    else:
        matrix = SimilarityMatrix.load(args.bio)
        labels = _align_to(matrix.ids, labels)
        metric, value = "bhi_zscore", bhi_zscore(labels, matrix, args.n_random, args.seed)
    line = f"{metric},{value:.17g}"
    print(line)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write("metric,value\n" + line + "\n")


def cmd_experiment(args) -> None:
    overrides = {}
    if args.repeats is not None:
        overrides["repeats"] = args.repeats
    if args.seed is not None:
        overrides["seed"] = args.seed
    spec = parse_experiment_spec(args.spec, overrides)
    result = run_experiment(spec, jobs=max(1, args.jobs))
    os.makedirs(args.output_dir, exist_ok=True)
    results_path = os.path.join(args.output_dir, "results.csv")
    summary_path = os.path.join(args.output_dir, "summary.csv")
    write_results_csv(result.rows, results_path)
    write_summary_csv(result.summary, summary_path)
    if result.failures:
        print(f"{len(result.failures)} stage failure(s) recorded", file=sys.stderr)
    for row in result.summary:
        if row["record"] == "median":
            print(
                f"median noise={row['noise']:g} {row['clusterer']:>12s} "
                f"{row['measure_a']:>11s}  nmi={row['value']:.4f}"
            )
    print(f"wrote {results_path} and {summary_path}")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError, TcsimError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
