"""Repeated benchmark driver: generate, fit, score, cluster, evaluate.

One experiment runs `repeats` independent draws of the synthetic dataset
at each noise level, applies every requested measure and clusterer, and
scores each clustering against ground truth with NMI.  Output is a long
table of per-repeat scores plus a summary of medians and Wilcoxon
rank-sum p-values between measures.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .clustering import hierarchical_average_linkage, knn_graph, spectral_cluster
from .errors import ExperimentError, InvalidInputError, ParseError, TcsimError
from .evaluation import nmi, wilcoxon_rank_sum
from .gp import OptimizerConfig, fit_shared_hyperparams
from .similarity import MEASURES, pairwise_matrix, to_dissimilarity
from .synthdata import SAMPLINGS, SynthConfig, generate
from .timecourse import _FMT

CLUSTERERS = ("spectral", "hierarchical")
_MODEL_MEASURES = ("gp", "bregman")

RESULT_COLUMNS = ("noise", "measure", "clusterer", "k", "repeat", "nmi", "seed")
SUMMARY_COLUMNS = ("record", "noise", "clusterer", "measure_a", "measure_b", "value")


@dataclass(frozen=True)
class ExperimentSpec:
    """Declarative description of one benchmark run."""

    sampling: str = "even"
    noise_levels: tuple = (0.08, 0.1, 0.12)
    measures: tuple = ("gp", "euclidean", "dtw")
    clusterers: tuple = CLUSTERERS
    repeats: int = 100
    k_neighbors: int = 7
    k_clusters: int = 3
    seed: int = 0
    n_per_profile: int = 50
    length: int = 15
    dropout_counts: tuple = (6, 7, 8)

    def __post_init__(self):
        if self.sampling not in SAMPLINGS:
            raise InvalidInputError(f"unknown sampling {self.sampling!r}")
        object.__setattr__(self, "noise_levels", tuple(float(v) for v in self.noise_levels))
        object.__setattr__(self, "measures", tuple(self.measures))
        object.__setattr__(self, "clusterers", tuple(self.clusterers))
        object.__setattr__(self, "dropout_counts", tuple(int(d) for d in self.dropout_counts))
        if not self.noise_levels or any(v < 0 for v in self.noise_levels):
            raise InvalidInputError("noise_levels must be non-empty and non-negative")
        if not self.measures:
            raise InvalidInputError("at least one measure is required")
        for m in self.measures:
            if m not in MEASURES:
                raise InvalidInputError(f"unknown measure {m!r}; choose from {MEASURES}")
        if not self.clusterers:
            raise InvalidInputError("at least one clusterer is required")
        for c in self.clusterers:
            if c not in CLUSTERERS:
                raise InvalidInputError(f"unknown clusterer {c!r}; choose from {CLUSTERERS}")
        if self.repeats < 1:
            raise InvalidInputError("repeats must be >= 1")
        if self.k_clusters < 1 or self.k_neighbors < 1:
            raise InvalidInputError("k_clusters and k_neighbors must be positive")


_LIST_KEYS = {"noise_levels", "measures", "clusterers", "dropout_counts"}
_INT_KEYS = {"repeats", "k_neighbors", "k_clusters", "seed", "n_per_profile", "length"}


def parse_experiment_spec(path, overrides: dict = None) -> ExperimentSpec:
    """Read a key=value experiment file (comments with '#', lists comma-
    separated), apply overrides on top, and validate."""
    fields = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError("expected 'key = value'", path, lineno)
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            try:
                fields[key] = _parse_spec_value(key, value)
            except (InvalidInputError, ValueError) as exc:
                raise ParseError(str(exc), path, lineno) from exc
    if overrides:
        fields.update(overrides)
    return ExperimentSpec(**fields)


def _parse_spec_value(key, value):
    if key == "sampling":
        return value
    if key in _LIST_KEYS:
        items = [v.strip() for v in value.split(",") if v.strip()]
        if key == "noise_levels":
            return tuple(float(v) for v in items)
        if key == "dropout_counts":
            return tuple(int(v) for v in items)
        return tuple(items)
    if key in _INT_KEYS:
        return int(value)
    raise InvalidInputError(f"unknown experiment key {key!r}")


def _run_repeat(spec: ExperimentSpec, noise: float, repeat: int):
    """All (measure, clusterer) scores for one dataset draw.

    Returns (rows, failures); a failed stage is recorded and the rest of
    the repeat continues.  The GP model is fitted lazily: never when no
    measure needs it, once per repeat otherwise.
    """
    rows, failures = [], []

    def fail(measure, clusterer, exc):
        failures.append(
            {
                "noise": noise,
                "repeat": repeat,
                "measure": measure,
                "clusterer": clusterer,
                "error": f"{type(exc).__name__}: {exc}",
            }
        )

    seed = spec.seed + repeat
    config = SynthConfig(
        n_per_profile=spec.n_per_profile,
        length=spec.length,
        noise_std=noise,
        sampling=spec.sampling,
        dropout_counts=spec.dropout_counts,
        seed=seed,
    )
    courses, truth = generate(config)

    model = None
    model_error = None
    if any(m in _MODEL_MEASURES for m in spec.measures):
        try:
            model = fit_shared_hyperparams(courses, OptimizerConfig(seed=seed))
        except TcsimError as exc:
            model_error = exc

    for measure in spec.measures:
        if measure in _MODEL_MEASURES and model_error is not None:
            fail(measure, "", model_error)
            continue
        try:
            matrix = pairwise_matrix(courses, measure, model)
        except TcsimError as exc:
            fail(measure, "", exc)
            continue
        for clusterer in spec.clusterers:
            try:
                if clusterer == "spectral":
                    graph = knn_graph(matrix, spec.k_neighbors)
                    assignment = spectral_cluster(graph, spec.k_clusters, seed)
                else:
                    assignment = hierarchical_average_linkage(
                        to_dissimilarity(matrix), spec.k_clusters
                    )
                value = nmi(assignment, truth)
            except TcsimError as exc:
                fail(measure, clusterer, exc)
                continue
            rows.append(
                {
                    "noise": noise,
                    "measure": measure,
                    "clusterer": clusterer,
                    "k": spec.k_clusters,
                    "repeat": repeat,
                    "nmi": value,
                    "seed": seed,
                }
            )
    return rows, failures


def _run_repeat_star(args):
    return _run_repeat(*args)


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    rows: list
    failures: list = field(default_factory=list)
    summary: list = field(default_factory=list)

    def values(self, noise, measure, clusterer) -> np.ndarray:
        return np.array(
            [
                r["nmi"]
                for r in self.rows
                if r["noise"] == noise
                and r["measure"] == measure
                and r["clusterer"] == clusterer
            ]
        )

    def median(self, noise, measure, clusterer) -> float:
        return float(np.median(self.values(noise, measure, clusterer)))

    def wilcoxon(self, noise, measure_a, measure_b, clusterer) -> float:
        return wilcoxon_rank_sum(
            self.values(noise, measure_a, clusterer),
            self.values(noise, measure_b, clusterer),
        )


def summarize(spec: ExperimentSpec, rows: list) -> list:
    """Median NMI per (noise, clusterer, measure) and Wilcoxon rank-sum
    p-values for every unordered measure pair."""
    by_key = {}
    for r in rows:
        by_key.setdefault((r["noise"], r["clusterer"], r["measure"]), []).append(r["nmi"])
    summary = []
    for noise in spec.noise_levels:
        for clusterer in spec.clusterers:
            for measure in spec.measures:
                vals = by_key.get((noise, clusterer, measure))
                if vals:
                    summary.append(
                        {
                            "record": "median",
                            "noise": noise,
                            "clusterer": clusterer,
                            "measure_a": measure,
                            "measure_b": "",
                            "value": float(np.median(vals)),
                        }
                    )
            for a, b in combinations(spec.measures, 2):
                va = by_key.get((noise, clusterer, a))
                vb = by_key.get((noise, clusterer, b))
                if va and vb:
                    summary.append(
                        {
                            "record": "wilcoxon_p",
                            "noise": noise,
                            "clusterer": clusterer,
                            "measure_a": a,
                            "measure_b": b,
                            "value": wilcoxon_rank_sum(va, vb),
                        }
                    )
    return summary


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> ExperimentResult:
    """Run every (noise, repeat) unit, summarize, and enforce the failure
    budget: more than 10% failed repeats aborts the whole experiment."""
    units = [(spec, noise, repeat) for noise in spec.noise_levels for repeat in range(spec.repeats)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_repeat_star, units, chunksize=1))
    else:
        outcomes = [_run_repeat(*unit) for unit in units]

    rows, failures = [], []
    for unit_rows, unit_failures in outcomes:
        rows.extend(unit_rows)
        failures.extend(unit_failures)
    failed_units = {(f["noise"], f["repeat"]) for f in failures}
    if len(failed_units) > 0.10 * len(units):
        raise ExperimentError(
            f"{len(failed_units)} of {len(units)} repeats failed (> 10%); "
            f"first failure: {failures[0]['error']}"
        )
    return ExperimentResult(spec, rows, failures, summarize(spec, rows))


def write_results_csv(rows: list, path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(RESULT_COLUMNS) + "\n")
        for r in rows:
            fh.write(
                ",".join(
                    [
                        _FMT % r["noise"],
                        r["measure"],
                        r["clusterer"],
                        str(r["k"]),
                        str(r["repeat"]),
                        _FMT % r["nmi"],
                        str(r["seed"]),
                    ]
                )
                + "\n"
            )


def write_summary_csv(summary: list, path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(SUMMARY_COLUMNS) + "\n")
        for r in summary:
            fh.write(
                ",".join(
                    [
                        r["record"],
                        _FMT % r["noise"],
                        r["clusterer"],
                        r["measure_a"],
                        r["measure_b"],
                        _FMT % r["value"],
                    ]
                )
                + "\n"
            )
