"""Time-course container and dataset file formats.

A dataset is a list of :class:`TimeCourse`.  Two CSV layouts are supported:

* wide (shared grid): first row is ``times,<x1>,...,<xt>``, then one row
  per series ``<id>,<v1>,...,<vt>``;
* long (per-series grids): header ``series_id,time,value`` followed by one
  row per observation.

Numbers are written with 17 significant digits so a write/read round trip
reproduces the in-memory doubles exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import IncompatibleGridsError, InvalidInputError, ParseError

_FMT = "%.17g"


@dataclass(frozen=True)
class TimeCourse:
    """One observed series: sampling times, values and an opaque id.

    Input pairs are sorted by time at construction, so a course is a set of
    (time, value) observations; duplicate times are rejected.
    """

    times: np.ndarray
    values: np.ndarray
    id: str = ""

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or values.ndim != 1:
            raise InvalidInputError("times and values must be 1-D")
        if times.size != values.size:
            raise InvalidInputError(
                f"course {self.id!r}: {times.size} times vs {values.size} values"
            )
        if times.size < 1:
            raise InvalidInputError(f"course {self.id!r}: needs at least one point")
        if not (np.isfinite(times).all() and np.isfinite(values).all()):
            raise InvalidInputError(f"course {self.id!r}: non-finite entries")
        order = np.argsort(times, kind="stable")
        times = times[order]
        values = values[order]
        if np.any(np.diff(times) <= 0):
            raise InvalidInputError(f"course {self.id!r}: duplicate sampling times")
        times.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.times.size

    def grid_key(self) -> tuple:
        """Hashable identity of the sampling grid."""
        return tuple(self.times.tolist())

    def centered(self) -> "TimeCourse":
        """Copy with the mean value subtracted."""
        return TimeCourse(self.times, self.values - self.values.mean(), self.id)


def shares_grid(a: TimeCourse, b: TimeCourse) -> bool:
    return a.times is b.times or (
        len(a) == len(b) and bool(np.array_equal(a.times, b.times))
    )


def common_grid(dataset) -> np.ndarray | None:
    """The shared sampling grid, or None if the courses use different grids."""
    if not dataset:
        return None
    first = dataset[0]
    for tc in dataset[1:]:
        if not shares_grid(first, tc):
            return None
    return first.times


def center_dataset(dataset):
    return [tc.centered() for tc in dataset]


def normalize_times(dataset):
    """Affinely rescale the union of all sampling times onto [0, 1]."""
    lo = min(tc.times[0] for tc in dataset)
    hi = max(tc.times[-1] for tc in dataset)
    if hi <= lo:
        raise InvalidInputError("cannot normalize times: zero time span")
    span = hi - lo
    return [TimeCourse((tc.times - lo) / span, tc.values, tc.id) for tc in dataset]


def write_wide(path, dataset) -> None:
    """Write a shared-grid dataset in the wide layout."""
    grid = common_grid(dataset)
    if grid is None:
        raise IncompatibleGridsError(
            "wide format requires all courses on one sampling grid"
        )
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["times"] + [_FMT % x for x in grid])
        for tc in dataset:
            w.writerow([tc.id] + [_FMT % v for v in tc.values])


def write_long(path, dataset) -> None:
    """Write any dataset in the long layout (one row per observation)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series_id", "time", "value"])
        for tc in dataset:
            for x, v in zip(tc.times, tc.values):
                w.writerow([tc.id, _FMT % x, _FMT % v])


def _parse_float(cell, path, lineno):
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"not a number: {cell!r}", path, lineno) from None


def read_dataset(path) -> list[TimeCourse]:
    """Read a dataset CSV, detecting the wide vs long layout from the header."""
    with open(path, newline="") as fh:
        rows = [
            (lineno, row)
            for lineno, row in enumerate(csv.reader(fh), start=1)
            if row and not row[0].startswith("#")
        ]
    if not rows:
        raise ParseError("empty dataset file", path, 1)
    header = rows[0][1]
    if header[0].strip() == "times":
        return _read_wide(rows, path)
    if [c.strip() for c in header[:3]] == ["series_id", "time", "value"]:
        return _read_long(rows[1:], path)
    raise ParseError(
        "unrecognized header: expected 'times,...' or 'series_id,time,value'",
        path,
        rows[0][0],
    )


def _read_wide(rows, path):
    lineno, header = rows[0]
    grid = np.array([_parse_float(c, path, lineno) for c in header[1:]])
    grid.flags.writeable = False
    courses = []
    for lineno, row in rows[1:]:
        if len(row) != grid.size + 1:
            raise ParseError(
                f"expected {grid.size + 1} columns, got {len(row)}", path, lineno
            )
        values = [_parse_float(c, path, lineno) for c in row[1:]]
        try:
            courses.append(TimeCourse(grid, np.array(values), row[0]))
        except InvalidInputError as exc:
            raise ParseError(str(exc), path, lineno) from exc
    if not courses:
        raise ParseError("wide file contains no series rows", path, lineno)
    return courses


def _read_long(rows, path):
    by_id: dict[str, list] = {}
    for lineno, row in rows:
        if len(row) != 3:
            raise ParseError(f"expected 3 columns, got {len(row)}", path, lineno)
        sid = row[0]
        by_id.setdefault(sid, []).append(
            (_parse_float(row[1], path, lineno), _parse_float(row[2], path, lineno))
        )
    if not by_id:
        raise ParseError("long file contains no observation rows", path, 1)
    courses = []
    for sid, pairs in by_id.items():
        times, values = zip(*pairs)
        try:
            courses.append(TimeCourse(np.array(times), np.array(values), sid))
        except InvalidInputError as exc:
            raise ParseError(str(exc), path) from exc
    return courses
