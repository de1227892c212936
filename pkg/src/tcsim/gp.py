"""Gaussian-process machinery shared by all time courses.

The model is a zero-mean GP with squared-exponential kernel plus i.i.d.
Gaussian observation noise.  Three hyperparameters (lengthscale, signal
std, noise std) are fitted jointly to a whole dataset by maximizing the
sum of per-course log marginal likelihoods; all linear algebra goes
through Cholesky factorizations, never explicit inverses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, get_lapack_funcs
from scipy.optimize import minimize

from .errors import (
    FactorizationError,
    InvalidInputError,
    OptimizationError,
    ParseError,
)
from .timecourse import TimeCourse

LOG_2PI = math.log(2.0 * math.pi)

MODEL_FORMAT_VERSION = 1

# diagonal jitter, relative to mean(diag), added once if Cholesky fails
_JITTER_REL = 1e-10


@dataclass(frozen=True)
class Hyperparams:
    """GP hyperparameters; all strictly positive.

    lengthscale is in time units, signal_std and noise_std in value units.
    """

    lengthscale: float
    signal_std: float
    noise_std: float

    def __post_init__(self):
        for name in ("lengthscale", "signal_std", "noise_std"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidInputError(f"{name} must be positive and finite, got {v}")

    def log_array(self) -> np.ndarray:
        return np.log([self.lengthscale, self.signal_std, self.noise_std])

    @classmethod
    def from_log_array(cls, x) -> "Hyperparams":
        return cls(*np.exp(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class CovarianceBundle:
    """Covariance matrices and factorization for one sampling grid.

    ``cov = gram + noise_std**2 * I``; ``chol`` is the lower Cholesky
    factor of ``cov`` (possibly stabilized by ``jitter`` on the diagonal)
    and ``logdet = 2 * sum(log(diag(chol)))``.
    """

    times: np.ndarray
    gram: np.ndarray
    cov: np.ndarray
    chol: np.ndarray
    logdet: float
    jitter: float = 0.0

    def solve(self, b: np.ndarray) -> np.ndarray:
        """cov^{-1} b via the cached factorization."""
        return cho_solve((self.chol, True), b)


def _validate_times(times, name="times"):
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 1-D vector")
    if not np.isfinite(t).all():
        raise InvalidInputError(f"{name} contains non-finite entries")
    return t


def kernel_matrix(times_a, times_b, hp: Hyperparams) -> np.ndarray:
    """Squared-exponential kernel matrix between two time vectors.

    M[p, q] = signal_std^2 * exp(-(a_p - b_q)^2 / (2 * lengthscale^2)).
    """
    a = _validate_times(times_a, "times_a")
    b = _validate_times(times_b, "times_b")
    diff = a[:, None] - b[None, :]
    return hp.signal_std**2 * np.exp(-(diff**2) / (2.0 * hp.lengthscale**2))


def _cholesky_lower(m: np.ndarray):
    """Lower Cholesky factor or the index of the failing leading minor."""
    (potrf,) = get_lapack_funcs(("potrf",), (m,))
    c, info = potrf(m, lower=True, clean=True)
    if info > 0:
        return None, int(info)
    if info < 0:
        raise FactorizationError(f"illegal argument {-info} passed to potrf")
    return c, 0


def factorize_psd(m: np.ndarray, label: str = "covariance"):
    """Lower Cholesky factor, log-determinant and jitter used for ``m``.

    If the first Cholesky fails (numerical degeneracy, e.g. nearly
    duplicate times with tiny noise) one diagonal jitter of
    1e-10 * trace(m)/t is added and the factorization retried; a second
    failure is a hard error naming the offending leading minor.
    """
    chol, minor = _cholesky_lower(m)
    jitter = 0.0
    if chol is None:
        jitter = _JITTER_REL * float(np.trace(m)) / m.shape[0]
        chol, minor = _cholesky_lower(m + jitter * np.eye(m.shape[0]))
        if chol is None:
            raise FactorizationError(
                f"{label} factorization failed at leading minor {minor} "
                f"({m.shape[0]}x{m.shape[0]} matrix, even after jitter {jitter:.3e})"
            )
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return chol, logdet, jitter


def assemble_covariance(times, hp: Hyperparams) -> CovarianceBundle:
    """Build gram/cov matrices for a grid and factorize cov."""
    t = _validate_times(times)
    gram = kernel_matrix(t, t, hp)
    cov = gram + hp.noise_std**2 * np.eye(t.size)
    chol, logdet, jitter = factorize_psd(cov, "observation covariance")
    return CovarianceBundle(t, gram, cov, chol, logdet, jitter)


def lml_terms(values: np.ndarray, bundle: CovarianceBundle):
    """(quadratic form, log marginal likelihood) for values on a factorized grid."""
    alpha = bundle.solve(values)
    quad = float(values @ alpha)
    t = values.shape[0]
    return quad, -0.5 * (quad + bundle.logdet + t * LOG_2PI)


def log_marginal_likelihood(tc: TimeCourse, hp: Hyperparams) -> float:
    """log p(values | times, hp) under the noisy GP model."""
    bundle = assemble_covariance(tc.times, hp)
    _, lml = lml_terms(tc.values, bundle)
    return lml


def _group_gradient(bundle: CovarianceBundle, Y: np.ndarray, hp: Hyperparams):
    """Objective and gradient contributions of all courses sharing one grid.

    Y has one column per course.  The gradient is taken with respect to
    (log lengthscale, log signal_std, log noise_std).
    """
    t, n = Y.shape
    A = bundle.solve(Y)
    quads = np.einsum("ij,ij->j", Y, A)
    lml = -0.5 * (float(quads.sum()) + n * (bundle.logdet + t * LOG_2PI))

    cov_inv = cho_solve((bundle.chol, True), np.eye(t))
    sqdist = (bundle.times[:, None] - bundle.times[None, :]) ** 2
    # d cov / d log(param), for each of the three hyperparameters
    d_ell = bundle.gram * (sqdist / hp.lengthscale**2)
    d_sf = 2.0 * bundle.gram
    sn2 = 2.0 * hp.noise_std**2

    grad = np.empty(3)
    for k, d in enumerate((d_ell, d_sf)):
        data = 0.5 * float(np.einsum("ij,ik,kj->", A, d, A))
        trace = -0.5 * n * float(np.sum(cov_inv * d))
        grad[k] = data + trace
    grad[2] = 0.5 * sn2 * float(np.einsum("ij,ij->", A, A)) - 0.5 * sn2 * n * float(
        np.trace(cov_inv)
    )
    return lml, grad


def lml_gradient(tc: TimeCourse, hp: Hyperparams) -> np.ndarray:
    """Gradient of the log marginal likelihood w.r.t. log-hyperparameters."""
    bundle = assemble_covariance(tc.times, hp)
    _, grad = _group_gradient(bundle, tc.values[:, None], hp)
    if not np.isfinite(grad).all():
        raise InvalidInputError(f"non-finite gradient at {hp}")
    return grad


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings for the multi-start quasi-Newton hyperparameter search."""

    n_restarts: int = 5
    max_iter: int = 200
    grad_tol: float = 1e-6
    seed: int = 0


@dataclass(frozen=True)
class FittedModel:
    """Fitted hyperparameters plus cached per-grid covariance factorizations.

    ``bundle_for`` returns the factorization for a grid, memoizing any
    grid it has not seen before.  The memo only ever gains entries whose
    values are pure functions of (grid, hyperparams), so shared use stays
    deterministic.
    """

    hyperparams: Hyperparams
    objective: float
    bundles: dict = field(default_factory=dict)
    fit_info: dict = field(default_factory=dict)

    def bundle_for(self, times) -> CovarianceBundle:
        key = tuple(np.asarray(times, dtype=float).tolist())
        bundle = self.bundles.get(key)
        if bundle is None:
            bundle = assemble_covariance(times, self.hyperparams)
            self.bundles[key] = bundle
        return bundle

    @classmethod
    def from_hyperparams(cls, hp: Hyperparams, dataset=(), objective=math.nan):
        """Model with pinned hyperparameters (no fitting), caching the dataset grids."""
        bundles = {}
        for tc in dataset:
            key = tc.grid_key()
            if key not in bundles:
                bundles[key] = assemble_covariance(tc.times, hp)
        return cls(hp, objective, bundles)

    def save(self, path) -> None:
        hp = self.hyperparams
        with open(path, "w") as fh:
            fh.write(f"format_version: {MODEL_FORMAT_VERSION}\n")
            fh.write(f"lengthscale: {hp.lengthscale:.17g}\n")
            fh.write(f"signal_std: {hp.signal_std:.17g}\n")
            fh.write(f"noise_std: {hp.noise_std:.17g}\n")
            fh.write(f"objective: {self.objective:.17g}\n")

    @classmethod
    def load(cls, path) -> "FittedModel":
        fields = {}
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if ":" not in line:
                    raise ParseError("expected 'key: value'", path, lineno)
                key, _, value = line.partition(":")
                fields[key.strip()] = value.strip()
        if fields.get("format_version") != str(MODEL_FORMAT_VERSION):
            raise ParseError(
                f"unsupported model format version {fields.get('format_version')!r}",
                path,
            )
        try:
            hp = Hyperparams(
                float(fields["lengthscale"]),
                float(fields["signal_std"]),
                float(fields["noise_std"]),
            )
            objective = float(fields["objective"])
        except (KeyError, ValueError) as exc:
            raise ParseError(f"bad model file: {exc}", path) from exc
        return cls(hp, objective)


def _group_dataset(dataset):
    """Group courses by identical sampling grid; one value matrix per grid."""
    groups = {}
    for tc in dataset:
        groups.setdefault(tc.grid_key(), []).append(tc)
    out = []
    for key, courses in groups.items():
        Y = np.column_stack([tc.values for tc in courses])
        out.append((courses[0].times, Y))
    return out


def fit_shared_hyperparams(
    dataset: list[TimeCourse], config: OptimizerConfig = OptimizerConfig()
) -> FittedModel:
    """Fit one set of hyperparameters to all courses by maximizing the
    summed log marginal likelihood.

    Multi-start L-BFGS-B in log-hyperparameter space; the best restart by
    final objective wins (ties broken by restart index).  Raises
    OptimizationError only if every restart fails.
    """
    if not dataset:
        raise InvalidInputError("cannot fit on an empty dataset")
    groups = _group_dataset(dataset)
    n_courses = len(dataset)

    all_values = np.concatenate([tc.values for tc in dataset])
    scale = float(np.std(all_values))
    if scale <= 0:
        scale = 1.0
    t_lo = min(tc.times[0] for tc in dataset)
    t_hi = max(tc.times[-1] for tc in dataset)
    span = float(t_hi - t_lo)
    if span <= 0:
        span = 1.0

    counters = {"objective_evals": 0, "factorizations": 0, "quadform_columns": 0}
    best_seen = {"x": None, "f": np.inf, "gnorm": np.inf}

    def negative_objective(x):
        hp = Hyperparams.from_log_array(x)
        counters["objective_evals"] += 1
        total = 0.0
        grad = np.zeros(3)
        for times, Y in groups:
            bundle = assemble_covariance(times, hp)
            counters["factorizations"] += 1
            counters["quadform_columns"] += Y.shape[1]
            lml, g = _group_gradient(bundle, Y, hp)
            total += lml
            grad += g
        if -total < best_seen["f"]:
            best_seen.update(
                x=x.copy(), f=-total, gnorm=float(np.abs(grad).max())
            )
        return -total, -grad

    # noise floor keeps the observation covariance numerically PD
    bounds = [
        (math.log(1e-3 * span), math.log(1e3 * span)),
        (math.log(1e-6 * scale), math.log(1e3 * scale)),
        (math.log(1e-6 * scale), math.log(1e3 * scale)),
    ]
    rng = np.random.default_rng(config.seed)
    inits = np.column_stack(
        [
            rng.uniform(math.log(0.1 * span), math.log(2.0 * span), config.n_restarts),
            rng.uniform(
                math.log(0.1 * scale), math.log(2.0 * scale), config.n_restarts
            ),
            rng.uniform(
                math.log(0.01 * scale), math.log(1.0 * scale), config.n_restarts
            ),
        ]
    )
    inits = np.clip(
        inits, [b[0] for b in bounds], [b[1] for b in bounds]
    )

    restarts = []
    for r in range(config.n_restarts):
        x0 = inits[r]
        history = []

        def record(xk):
            f, _ = negative_objective(xk)
            history.append(-f)

        try:
            f0, _ = negative_objective(x0)
            res = minimize(
                negative_objective,
                x0,
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                callback=record,
                options={
                    "maxiter": config.max_iter,
                    "gtol": config.grad_tol,
                    "ftol": 1e-13,
                },
            )
            ok = np.isfinite(res.fun)
            restarts.append(
                {
                    "init": np.exp(x0).tolist(),
                    "objective_at_init": -f0,
                    "objective": -float(res.fun) if ok else -np.inf,
                    "x": res.x,
                    "converged": bool(res.success),
                    "objective_history": [-f0] + history,
                    "error": None,
                }
            )
        except FactorizationError as exc:
            restarts.append(
                {
                    "init": np.exp(x0).tolist(),
                    "objective_at_init": -np.inf,
                    "objective": -np.inf,
                    "x": None,
                    "converged": False,
                    "objective_history": [],
                    "error": str(exc),
                }
            )

    usable = [r for r in restarts if r["x"] is not None and np.isfinite(r["objective"])]
    if not usable:
        raise OptimizationError(
            "no optimizer restart produced a usable iterate",
            best_params=(
                None
                if best_seen["x"] is None
                else Hyperparams.from_log_array(best_seen["x"])
            ),
            best_objective=-best_seen["f"],
            grad_norm=best_seen["gnorm"],
        )
    best_idx = max(
        range(len(restarts)),
        key=lambda i: (restarts[i]["objective"], -i),
    )
    best = restarts[best_idx]
    hp = Hyperparams.from_log_array(best["x"])

    bundles = {}
    for times, _ in groups:
        bundles[tuple(times.tolist())] = assemble_covariance(times, hp)

    fit_info = {
        "n_courses": n_courses,
        "n_grids": len(groups),
        "best_restart": best_idx,
        "restarts": restarts,
        **counters,
    }
    return FittedModel(hp, best["objective"], bundles, fit_info)
