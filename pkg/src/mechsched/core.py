"""Cost containers, order statistics and social-cost evaluation.

Cost vectors and matrices are plain float64 numpy arrays (shape ``(n,)`` and
``(m, n)``: one row per task, one column per machine). The validators here
are the single gate that rejects empty, non-finite or non-positive input.
Machine indices are 0-based throughout the Python API.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from os import PathLike

import numpy as np

PROB_ATOL = 1e-12
SUM_ATOL = 1e-9


class MechSchedError(ValueError):
    """Base class for input errors raised by this package."""


class InvalidCostError(MechSchedError):
    """Costs that are empty, non-finite or not strictly positive."""


class CostParseError(MechSchedError):
    """Malformed cost text; carries the 1-based row and column."""

    def __init__(self, message: str, row: int, column: int | None = None):
        where = f"row {row}" if column is None else f"row {row}, column {column}"
        super().__init__(f"{where}: {message}")
        self.row = row
        self.column = column


def as_cost_vector(costs) -> np.ndarray:
    t = np.asarray(costs, dtype=np.float64)
    if t.ndim != 1:
        raise InvalidCostError(f"cost vector must be 1-D, got shape {t.shape}")
    if t.size == 0:
        raise InvalidCostError("cost vector is empty")
    if not np.all(np.isfinite(t)):
        raise InvalidCostError("costs must be finite")
    if np.any(t <= 0):
        raise InvalidCostError(f"costs must be strictly positive, got min {float(t.min())!r}")
    return t


def as_cost_matrix(costs) -> np.ndarray:
    t = np.asarray(costs, dtype=np.float64)
    if t.ndim == 1:
        t = t[None, :]
    if t.ndim != 2:
        raise InvalidCostError(f"cost matrix must be 2-D (tasks x machines), got shape {t.shape}")
    if t.shape[0] == 0 or t.shape[1] == 0:
        raise InvalidCostError(f"cost matrix needs m >= 1 tasks and n >= 1 machines, got {t.shape}")
    if not np.all(np.isfinite(t)):
        raise InvalidCostError("costs must be finite")
    if np.any(t <= 0):
        raise InvalidCostError(f"costs must be strictly positive, got min {float(t.min())!r}")
    return t


def check_allocation(probs, n: int | None = None) -> np.ndarray:
    """Validate a probability vector on the simplex and return it as an array."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise MechSchedError(f"allocation must be a non-empty 1-D vector, got shape {p.shape}")
    if n is not None and p.size != n:
        raise MechSchedError(f"allocation has {p.size} entries, costs have {n}")
    if np.any(p < -PROB_ATOL) or np.any(p > 1 + PROB_ATOL):
        raise MechSchedError("allocation entries must lie in [0, 1]")
    if abs(p.sum() - 1.0) > SUM_ATOL:
        raise MechSchedError(f"allocation sums to {p.sum()!r}, not 1")
    return p


@dataclass(frozen=True)
class SortedCosts:
    """Ascending order statistics plus the machine behind each rank.

    ``permutation[k]`` is the original machine index holding rank ``k``, so
    ``original[permutation] == sorted``.
    """

    sorted: np.ndarray
    permutation: np.ndarray

    def unsort(self, ranked: np.ndarray) -> np.ndarray:
        """Scatter a rank-ordered vector back to original machine order."""
        out = np.empty_like(np.asarray(ranked, dtype=np.float64))
        out[self.permutation] = ranked
        return out


def sort_costs(costs) -> SortedCosts:
    """Stable ascending sort; tied machines keep their original order."""
    t = as_cost_vector(costs)
    perm = np.argsort(t, kind="stable")
    return SortedCosts(sorted=t[perm], permutation=perm)


def social_cost(alloc, costs) -> float:
    """Expected execution cost sum_i p_i t_i under truthful reports."""
    t = as_cost_vector(costs)
    p = check_allocation(alloc, t.size)
    return float(p @ t)


def optimal_allocation(costs) -> np.ndarray:
    t = as_cost_vector(costs)
    p = np.zeros_like(t)
    p[np.argmin(t)] = 1.0  # argmin returns the lowest-indexed minimizer
    return p


def total_social_cost(alloc, costs) -> float:
    """Sum of per-task social costs; shapes must match exactly."""
    t = as_cost_matrix(costs)
    p = np.asarray(alloc, dtype=np.float64)
    if p.ndim == 1:
        p = p[None, :]
    if p.shape != t.shape:
        raise MechSchedError(f"allocation shape {p.shape} does not match cost shape {t.shape}")
    return float(sum(social_cost(p[j], t[j]) for j in range(t.shape[0])))


# ------------------------------------------------------------------ parsing


def _parse_rows(rows, first_row: int = 1) -> np.ndarray:
    parsed = []
    width = None
    for r, fields in enumerate(rows, start=first_row):
        if not fields or all(f.strip() == "" for f in fields):
            continue
        values = []
        for c, field in enumerate(fields, start=1):
            text = field.strip()
            try:
                values.append(float(text))
            except ValueError:
                raise CostParseError(f"not a number: {text!r}", r, c) from None
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise CostParseError(f"expected {width} machines, found {len(values)}", r)
        parsed.append(values)
    if not parsed:
        raise CostParseError("no cost rows found", first_row)
    return as_cost_matrix(parsed)


def parse_inline_costs(text: str) -> np.ndarray:
    """Parse ``"1,2,3;4,5,6"``: commas within a task, semicolons between tasks."""
    rows = [chunk.split(",") for chunk in text.strip().split(";")]
    return _parse_rows(rows)


def read_cost_csv(path: str | PathLike, header: bool = False) -> np.ndarray:
    with open(path, newline="") as fh:
        return parse_cost_csv(fh.read(), header=header)


def parse_cost_csv(text: str, header: bool = False) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    start = 1
    if header and rows:
        rows = rows[1:]
        start = 2
    return _parse_rows(rows, first_row=start)
