"""Truthful single-task allocation rules K and P, plus OPT for reference.

Multi-task inputs are handled by running the single-task rule on every row
independently. Probabilities are always returned in original machine order
unless a name says otherwise (``*_sorted`` / ``ThresholdReport`` fields are
indexed by ascending-cost rank).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from . import _kernels
from .core import (
    MechSchedError,
    PROB_ATOL,
    SUM_ATOL,
    as_cost_matrix,
    as_cost_vector,
    optimal_allocation,
    sort_costs,
)

REFERENCE_MAX_N = 12
DEFAULT_FACTORS = (0.5, 0.8, 0.9, 1.1, 1.25, 2.0)


class QuadratureError(ArithmeticError):
    """K's probabilities summed too far from 1 to be a rounding artifact."""


class MechanismId(str, enum.Enum):
    K = "k"
    P = "p"
    OPT = "opt"

    @property
    def code(self) -> int:
        return {"k": _kernels.K, "p": _kernels.P, "opt": _kernels.OPT}[self.value]

    @classmethod
    def parse(cls, value: "str | MechanismId") -> "MechanismId":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise MechSchedError(f"unknown mechanism {value!r}; expected one of k, p, opt") from None


def _allocate_rows(mech: MechanismId, costs: np.ndarray) -> np.ndarray:
    probs, dev = _kernels.allocate_batch(costs, mech.code)
    if dev > SUM_ATOL:
        raise QuadratureError(f"K probabilities summed to 1 +/- {dev:.3e} before normalization")
    return probs


def allocate_k(costs) -> np.ndarray:
    """Mechanism K via exact Gauss-Legendre integration of the product form."""
    t = as_cost_vector(costs)
    return _allocate_rows(MechanismId.K, t[None, :])[0]


def allocate_p(costs) -> np.ndarray:
    """Allocate with probability inversely proportional to cost."""
    t = as_cost_vector(costs)
    inv = 1.0 / t
    return inv / inv.sum()


def allocate_k_reference(costs) -> np.ndarray:
    """Mechanism K from its original single/double-integral definition.

    Expands prod(1 - y / t_i) into monomial coefficients and integrates term
    by term. Independent of :func:`allocate_k` and only meant as an oracle:
    the alternating coefficients lose precision as n grows, so n is capped.
    """
    t = as_cost_vector(costs)
    n = t.size
    if n > REFERENCE_MAX_N:
        raise MechSchedError(f"reference oracle supports n <= {REFERENCE_MAX_N}, got {n}")
    sc = sort_costs(t)
    s = sc.sorted
    t1 = s[0]

    def product_poly(skip: int) -> np.ndarray:
        coef = np.array([1.0])
        for i in range(1, n):
            if i != skip:
                coef = npoly.polymul(coef, [1.0, -1.0 / s[i]])
        return coef

    ranked = np.empty(n)
    ranked[0] = npoly.polyval(t1, npoly.polyint(product_poly(0))) / t1
    for k in range(1, n):
        inner = npoly.polyint(product_poly(k))  # int_0^y
        ranked[k] = npoly.polyval(t1, npoly.polyint(inner)) / (t1 * s[k])
    return sc.unsort(ranked)


def allocate(mech, costs) -> np.ndarray:
    """Run ``mech`` independently on every task (row) of a cost matrix."""
    mech = MechanismId.parse(mech)
    t = as_cost_matrix(costs)
    if mech is MechanismId.OPT:
        return np.vstack([optimal_allocation(row) for row in t])
    return _allocate_rows(mech, t)


def expected_agent_cost(mech, true_costs, reported_costs, agent: int) -> float:
    """Expected cost of ``agent`` when allocated on reports but paying max(true, reported)."""
    t = as_cost_matrix(true_costs)
    rep = as_cost_matrix(reported_costs)
    if t.shape != rep.shape:
        raise MechSchedError(f"true costs {t.shape} and reports {rep.shape} differ in shape")
    if not 0 <= agent < t.shape[1]:
        raise MechSchedError(f"agent index {agent} outside [0, {t.shape[1]})")
    p = allocate(mech, rep)[:, agent]
    return float(p @ np.maximum(t[:, agent], rep[:, agent]))


def deviation_gaps(mech, true_costs: np.ndarray, factors: Sequence[float] = DEFAULT_FACTORS) -> np.ndarray:
    """Cost change for every single-agent misreport in a batch of instances.

    ``true_costs`` has shape (T, m, n). Agent i's whole report vector is
    scaled by each factor while everyone else reports truthfully. Returns
    deviation cost minus truthful cost, shape (T, n, len(factors)); a
    truthful mechanism keeps every entry >= 0 up to rounding.
    """
    mech = MechanismId.parse(mech)
    t = np.asarray(true_costs, dtype=np.float64)
    if t.ndim != 3:
        raise MechSchedError(f"expected (trials, m, n) costs, got shape {t.shape}")
    as_cost_matrix(t.reshape(-1, t.shape[2]))
    f = np.asarray(factors, dtype=np.float64)
    if f.ndim != 1 or f.size == 0 or np.any(f <= 0):
        raise MechSchedError("factors must be a non-empty list of positive numbers")
    T, m, n = t.shape
    F = f.size

    truth = _allocate_rows(mech, t.reshape(T * m, n)).reshape(T, m, n)
    truthful_cost = np.einsum("tji,tji->ti", truth, t)  # (T, n)

    rep = np.broadcast_to(t[:, None, None], (T, n, F, m, n)).copy()
    agents = np.arange(n)
    rep[:, agents, :, :, agents] *= f[None, :, None]
    probs = _allocate_rows(mech, rep.reshape(-1, n)).reshape(T, n, F, m, n)
    own = probs[:, agents, :, :, agents]  # (n, T, F, m)
    own_true = t[:, :, agents]  # (T, m, n)
    paid = np.moveaxis(own_true, 2, 0)[:, :, None, :] * np.maximum(1.0, f)[None, None, :, None]
    dev_cost = (own * paid).sum(axis=-1)  # (n, T, F)
    return np.moveaxis(dev_cost, 0, 1) - truthful_cost[:, :, None]


@dataclass(frozen=True)
class ThresholdReport:
    """Rank l (1-based) splitting ranks where K out-allocates P from the rest."""

    l: int
    probs_k: np.ndarray
    probs_p: np.ndarray

    def holds(self, tol: float = SUM_ATOL) -> bool:
        k = np.arange(1, self.probs_k.size + 1)
        head = k <= self.l
        return bool(
            np.all(self.probs_k[head] >= self.probs_p[head] - tol)
            and np.all(self.probs_k[~head] < self.probs_p[~head] + tol)
        )


def _threshold_ranks(pk: np.ndarray, pp: np.ndarray) -> np.ndarray:
    # rounding-level ties count as "K >= P"; otherwise equal costs could give l < n
    ge = pk >= pp - PROB_ATOL
    n = pk.shape[-1]
    last = n - np.argmax(ge[..., ::-1], axis=-1)
    return np.where(ge.any(axis=-1), last, 1)


def threshold_index(costs) -> ThresholdReport:
    sc = sort_costs(costs)
    pk = allocate_k(sc.sorted)
    pp = allocate_p(sc.sorted)
    return ThresholdReport(l=int(_threshold_ranks(pk, pp)), probs_k=pk, probs_p=pp)


@dataclass(frozen=True)
class ComparisonBatch:
    sc_k: np.ndarray
    sc_p: np.ndarray
    l: np.ndarray
    threshold_ok: np.ndarray


def compare_batch(costs: np.ndarray) -> ComparisonBatch:
    """K vs P on many single-task instances (rows of ``costs``) at once."""
    t = np.asarray(costs, dtype=np.float64)
    as_cost_matrix(t)
    pk = _allocate_rows(MechanismId.K, t)
    pp = _allocate_rows(MechanismId.P, t)
    order = np.argsort(t, axis=1, kind="stable")
    pk_s = np.take_along_axis(pk, order, axis=1)
    pp_s = np.take_along_axis(pp, order, axis=1)
    l = _threshold_ranks(pk_s, pp_s)
    ranks = np.arange(1, t.shape[1] + 1)
    head = ranks[None, :] <= l[:, None]
    ok = np.where(head, pk_s >= pp_s - SUM_ATOL, pk_s < pp_s + SUM_ATOL).all(axis=1)
    return ComparisonBatch(
        sc_k=(pk * t).sum(axis=1),
        sc_p=(pp * t).sum(axis=1),
        l=l,
        threshold_ok=ok,
    )
