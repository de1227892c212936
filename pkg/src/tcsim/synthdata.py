"""Synthetic time-course generator used by the experiments and tests.

Three fixed smooth profiles on [0, 1], sampled on an even grid, a fixed
irregular grid, or per-course asynchronous grids (random interior
dropout), with i.i.d. additive Gaussian noise.  Fully deterministic
given the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import ClusterAssignment
from .errors import InvalidInputError
from .timecourse import TimeCourse

SAMPLINGS = ("even", "uneven", "async")
PROFILE_IDS = (1, 2, 3)

# fraction of points falling in each band of the uneven grid;
# at the default length 15 this gives 7 + 3 + 5 points
_UNEVEN_BANDS = ((0.0, 0.3, 7), (0.4, 0.6, 3), (0.8, 1.0, 5))


def profile(profile_id: int, x):
    """One of the three reference curves, evaluated at x in [0, 1].

    P1(x) = sin(2 pi x)/2, P2(x) = x - 0.5,
    P3(x) = exp(-(x-0.5)^2/0.02)/2 - 0.25.
    All bounded in [-0.5, 0.6] and pairwise well separated in L2.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise InvalidInputError("profile input must lie in [0, 1]")
    if profile_id == 1:
        return np.sin(2.0 * np.pi * x) / 2.0
    if profile_id == 2:
        return x - 0.5
    if profile_id == 3:
        return np.exp(-((x - 0.5) ** 2) / 0.02) / 2.0 - 0.25
    raise InvalidInputError(f"profile id must be one of {PROFILE_IDS}, got {profile_id}")


def uneven_grid(length: int) -> np.ndarray:
    """Fixed irregular grid: points concentrated early and late with a
    sparse middle, proportioned like the 7/3/5 split at length 15."""
    total = sum(b[2] for b in _UNEVEN_BANDS)
    counts = [round(b[2] * length / total) for b in _UNEVEN_BANDS]
    counts[-1] = length - sum(counts[:-1])
    if any(c < 1 for c in counts):
        raise InvalidInputError(f"length {length} too small for the uneven layout")
    parts = [
        np.linspace(lo, hi, c) for (lo, hi, _), c in zip(_UNEVEN_BANDS, counts)
    ]
    return np.concatenate(parts)


@dataclass(frozen=True)
class SynthConfig:
    """Generation settings; defaults mirror the 150-course benchmark."""

    n_per_profile: int = 50
    length: int = 15
    noise_std: float = 0.08
    sampling: str = "even"
    dropout_counts: tuple = (6, 7, 8)
    seed: int = 0

    def __post_init__(self):
        if self.n_per_profile < 1:
            raise InvalidInputError("n_per_profile must be positive")
        if self.length < 2:
            raise InvalidInputError("length must be at least 2")
        if not (np.isfinite(self.noise_std) and self.noise_std >= 0):
            raise InvalidInputError("noise_std must be finite and non-negative")
        if self.sampling not in SAMPLINGS:
            raise InvalidInputError(
                f"sampling must be one of {SAMPLINGS}, got {self.sampling!r}"
            )
        counts = tuple(int(d) for d in self.dropout_counts)
        object.__setattr__(self, "dropout_counts", counts)
        if self.sampling == "async":
            if not counts:
                raise InvalidInputError("async sampling needs dropout_counts")
            if any(d < 0 or d > self.length - 2 for d in counts):
                raise InvalidInputError(
                    f"dropout counts must lie in [0, {self.length - 2}] "
                    f"to keep both endpoints, got {counts}"
                )


def generate(config: SynthConfig):
    """Draw the dataset: 3 * n_per_profile courses plus ground truth.

    Even/uneven sampling shares one grid across all courses; async keeps
    the two endpoints of the even grid and removes d interior points per
    course, d drawn uniformly from dropout_counts.
    """
    if config.sampling == "uneven":
        base = uneven_grid(config.length)
    else:
        base = np.linspace(0.0, 1.0, config.length)
    rng = np.random.default_rng(config.seed)
    dropout_choices = np.array(sorted(config.dropout_counts))
    interior = np.arange(1, config.length - 1)

    courses = []
    labels = []
    for group, pid in enumerate(PROFILE_IDS):
        for i in range(config.n_per_profile):
            times = base
            if config.sampling == "async":
                d = int(rng.choice(dropout_choices))
                removed = rng.choice(interior, size=d, replace=False)
                times = np.delete(base, removed)
            values = profile(pid, times) + config.noise_std * rng.standard_normal(
                times.size
            )
            courses.append(TimeCourse(times, values, id=f"p{pid}_{i:03d}"))
            labels.append(group)
    truth = ClusterAssignment(
        np.array(labels), len(PROFILE_IDS), tuple(tc.id for tc in courses)
    )
    return courses, truth
