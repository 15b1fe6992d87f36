"""Average-case ratio estimation and the closed forms it is checked against."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from os import PathLike
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .core import MechSchedError, SUM_ATOL
from .distributions import (
    DistributionSpec,
    RandomStream,
    cdf,
    conditional_sample,
    derive_seed,
    inverse_mean_reciprocal,
    quantile,
)
from .mechanisms import (
    DEFAULT_FACTORS,
    MechanismId,
    QuadratureError,
    compare_batch,
    deviation_gaps,
)

PRIOR_MASS = 11.0 / 12.0
PRIOR_SLOPE, PRIOR_OFFSET = 2.0, 1.33
SWEEP_HEADER = ("n", "mean_k", "se_k", "mean_p", "se_p", "limit")

_CHUNK_ELEMS = 2_000_000


@dataclass(frozen=True)
class SimulationConfig:
    n: int
    specs: tuple[DistributionSpec, ...]
    trials: int
    master_seed: int
    mechanism: MechanismId = MechanismId.K

    def __post_init__(self):
        specs = tuple(self.specs)
        object.__setattr__(self, "specs", specs)
        object.__setattr__(self, "mechanism", MechanismId.parse(self.mechanism))
        if int(self.n) != self.n or self.n < 1:
            raise MechSchedError(f"n must be a positive integer, got {self.n!r}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise MechSchedError(f"trials must be a positive integer, got {self.trials!r}")
        if not specs:
            raise MechSchedError("need at least one task distribution")
        if not all(isinstance(s, DistributionSpec) for s in specs):
            raise MechSchedError("specs must be DistributionSpec instances")
        if not 0 <= self.master_seed < 2**64:
            raise MechSchedError("master_seed must fit in an unsigned 64-bit integer")

    @property
    def m(self) -> int:
        return len(self.specs)


@dataclass(frozen=True)
class RatioEstimate:
    mean: float
    std_error: float
    trials: int
    theoretical_limit: float
    seed: int


@dataclass(frozen=True)
class SweepRow:
    n: int
    mean_k: float
    mean_p: float
    std_error_k: float
    std_error_p: float
    limit: float


@dataclass(frozen=True)
class BoundComparison:
    limit: float
    h: float
    prior_bound: float
    new_bound: float


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    # fsum is exact, so the result does not depend on summation order
    T = values.size
    mean = math.fsum(values) / T
    if T < 2:
        return mean, 0.0
    var = math.fsum((values - mean) ** 2) / (T - 1)
    return mean, math.sqrt(var / T)


def _ratios(costs: np.ndarray, mech: MechanismId) -> np.ndarray:
    ratios, dev = _kernels.ratio_batch(costs, mech.code)
    if dev > SUM_ATOL:
        raise QuadratureError(f"K probabilities summed to 1 +/- {dev:.3e} before normalization")
    return ratios


def draw_costs(config: SimulationConfig, start: int, stop: int) -> np.ndarray:
    """Cost matrices for trials [start, stop): shape (stop - start, m, n).

    Trial k reads stream (master_seed, k), so a trial's draw is the same no
    matter how trials are chunked or which mechanism is evaluated on it.
    """
    m, n = config.m, config.n
    u = np.empty((stop - start, m, n))
    for b, k in enumerate(range(start, stop)):
        u[b] = RandomStream(config.master_seed, k).uniform((m, n))
    costs = np.empty_like(u)
    for j, spec in enumerate(config.specs):
        costs[:, j, :] = quantile(spec, u[:, j, :])
    return costs


def trial_ratios(config: SimulationConfig) -> np.ndarray:
    """Per-trial sum_j SC(t^j) / sum_j t^j_(1), in trial order."""
    step = max(1, _CHUNK_ELEMS // (config.m * config.n))
    out = np.empty(config.trials)
    for lo in range(0, config.trials, step):
        hi = min(config.trials, lo + step)
        out[lo:hi] = _ratios(draw_costs(config, lo, hi), config.mechanism)
    return out


def theoretical_limit(specs: Sequence[DistributionSpec]) -> float:
    """sum_j (E_j[1/t])^-1 / sum_j t_min^j, the large-n limit for K and P."""
    specs = list(specs)
    if not specs:
        raise MechSchedError("need at least one task distribution")
    return math.fsum(inverse_mean_reciprocal(s) for s in specs) / math.fsum(s.t_min for s in specs)


def estimate_average_ratio(config: SimulationConfig) -> RatioEstimate:
    mean, se = _mean_se(trial_ratios(config))
    return RatioEstimate(
        mean=mean,
        std_error=se,
        trials=config.trials,
        theoretical_limit=theoretical_limit(config.specs),
        seed=config.master_seed,
    )


def _check_smk(s: float, mu: float, n: int) -> None:
    if not s > 0:
        raise MechSchedError(f"s must be > 0, got {s!r}")
    if not 0 < mu <= 1:
        raise MechSchedError(f"mu must lie in (0, 1], got {mu!r}")
    if int(n) != n or n < 1:
        raise MechSchedError(f"n must be a positive integer, got {n!r}")


def conditional_expected_sc_k(s: float, mu: float, n: int) -> float:
    """E[SC_K | t_(1) = s] when the other n - 1 costs are i.i.d. with E[s/t] = mu.

    (s / mu) * [1 - (1 - mu)(1 - (1 - mu)^n) / (n mu)]; mu = 1 gives s.
    """
    _check_smk(s, mu, n)
    tail = -math.expm1(n * math.log1p(-mu)) if mu < 1 else 1.0
    return (s / mu) * (1.0 - (1.0 - mu) * tail / (n * mu))


def conditional_sc_k_bounds(s: float, mu: float, n: int) -> tuple[float, float]:
    """(lower, upper) = ((s/mu)(1 - 1/(n mu)), s/mu); the lower one is vacuous when <= 0."""
    _check_smk(s, mu, n)
    upper = s / mu
    return upper * (1.0 - 1.0 / (n * mu)), upper


lemma2_bounds = conditional_sc_k_bounds


def conditional_sc_k_monte_carlo(
    spec: DistributionSpec, s: float, n: int, trials: int, seed: int
) -> tuple[float, float]:
    """Mean and standard error of SC_K with t_(1) pinned at s.

    The other n - 1 machines draw from the conditional law above s, and K
    is evaluated on each full instance.
    """
    if n < 1 or trials < 1:
        raise MechSchedError("n and trials must be positive")
    if n == 1:
        return float(s), 0.0
    stream = RandomStream(seed, 0)
    step = max(1, _CHUNK_ELEMS // n)
    sc = np.empty(trials)
    for lo in range(0, trials, step):
        hi = min(trials, lo + step)
        costs = np.empty((hi - lo, 1, n))
        costs[:, 0, 0] = s
        costs[:, 0, 1:] = conditional_sample(spec, s, stream, (hi - lo, n - 1))
        sc[lo:hi] = s * _ratios(costs, MechanismId.K)
    return _mean_se(sc)


def convergence_sweep(base: SimulationConfig, n_values: Iterable[int]) -> list[SweepRow]:
    """K and P ratios for each n; both mechanisms share the draws at a given n."""
    ns = sorted(set(int(v) for v in n_values))
    if not ns or ns[0] < 1:
        raise MechSchedError("n_values must be a non-empty list of positive integers")
    limit = theoretical_limit(base.specs)
    rows = []
    for n in ns:
        seed = derive_seed(base.master_seed, n)
        est = {}
        for mech in (MechanismId.K, MechanismId.P):
            cfg = SimulationConfig(n=n, specs=base.specs, trials=base.trials, master_seed=seed, mechanism=mech)
            est[mech] = _mean_se(trial_ratios(cfg))
        rows.append(
            SweepRow(
                n=n,
                mean_k=est[MechanismId.K][0],
                mean_p=est[MechanismId.P][0],
                std_error_k=est[MechanismId.K][1],
                std_error_p=est[MechanismId.P][1],
                limit=limit,
            )
        )
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path: str | PathLike) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_HEADER)
        for r in rows:
            writer.writerow(
                [r.n, repr(r.mean_k), repr(r.std_error_k), repr(r.mean_p), repr(r.std_error_p), repr(r.limit)]
            )


def read_sweep_csv(path: str | PathLike) -> list[SweepRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SWEEP_HEADER:
            raise MechSchedError(f"unexpected sweep header {reader.fieldnames!r}")
        return [
            SweepRow(
                n=int(rec["n"]),
                mean_k=float(rec["mean_k"]),
                mean_p=float(rec["mean_p"]),
                std_error_k=float(rec["se_k"]),
                std_error_p=float(rec["se_p"]),
                limit=float(rec["limit"]),
            )
            for rec in reader
        ]


def prior_mass_multiple(spec: DistributionSpec, mass: float = PRIOR_MASS, tol: float = 1e-9) -> float:
    """Smallest h (to within tol) with F(h * t_min) >= mass, by bisection."""
    if not 0 < mass < 1:
        raise MechSchedError(f"mass must lie in (0, 1), got {mass!r}")
    lo, hi = 1.0, 2.0
    while cdf(spec, hi * spec.t_min) < mass:
        lo, hi = hi, hi * 2.0
        if hi > 1e300:
            raise MechSchedError(f"{spec} never reaches mass {mass}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if cdf(spec, mid * spec.t_min) >= mass:
            hi = mid
        else:
            lo = mid
    return hi


def improved_bound_check(spec: DistributionSpec) -> BoundComparison:
    """Single-task limit against the earlier 2h + 1.33 bound."""
    h = prior_mass_multiple(spec)
    limit = theoretical_limit([spec])
    return BoundComparison(limit=limit, h=h, prior_bound=PRIOR_SLOPE * h + PRIOR_OFFSET, new_bound=limit)


def log_uniform_costs(stream: RandomStream, shape, low: float = 1e-3, high: float = 1e3) -> np.ndarray:
    lo, hi = math.log(low), math.log(high)
    return np.exp(lo + (hi - lo) * stream.uniform(shape))


def worst_case_probe(mech, n: int, trials: int, stream: RandomStream, decades: float = 6.0) -> float:
    """Largest SC / t_(1) seen over log-uniform draws spanning ``decades`` orders of magnitude.

    The extreme instance (1, M, ..., M) with M = 10**decades is always
    probed as well, since it pushes both K and P toward their worst case.
    """
    mech = MechanismId.parse(mech)
    if n < 1 or trials < 1:
        raise MechSchedError("n and trials must be positive")
    extreme = np.full((1, 1, n), 10.0**decades)
    extreme[0, 0, 0] = 1.0
    best = float(_ratios(extreme, mech).max())
    step = max(1, _CHUNK_ELEMS // n)
    for lo in range(0, trials, step):
        b = min(trials, lo + step) - lo
        costs = log_uniform_costs(stream, (b, 1, n), 1.0, 10.0**decades)
        best = max(best, float(_ratios(costs, mech).max()))
    return best


def truthfulness_probe(
    mech,
    n: int,
    m: int,
    trials: int,
    seed: int,
    factors: Sequence[float] = DEFAULT_FACTORS,
) -> float:
    """Minimum over trials, agents and factors of (misreport cost - truthful cost)."""
    if min(n, m, trials) < 1:
        raise MechSchedError("n, m and trials must be positive")
    stream = RandomStream(seed, 0)
    f = np.asarray(factors, dtype=np.float64)
    step = max(1, _CHUNK_ELEMS // (n * n * m * max(1, f.size)))
    worst = math.inf
    for lo in range(0, trials, step):
        b = min(trials, lo + step) - lo
        costs = log_uniform_costs(stream, (b, m, n))
        worst = min(worst, float(deviation_gaps(mech, costs, f).min()))
    return worst


def dominance_probe(n: int, trials: int, seed: int):
    """K vs P on ``trials`` log-uniform single-task instances with n machines."""
    costs = log_uniform_costs(RandomStream(seed, 0), (trials, n))
    return compare_batch(costs)


__all__ = [
    "BoundComparison",
    "RatioEstimate",
    "SimulationConfig",
    "SweepRow",
    "conditional_expected_sc_k",
    "conditional_sc_k_monte_carlo",
    "convergence_sweep",
    "dominance_probe",
    "draw_costs",
    "estimate_average_ratio",
    "improved_bound_check",
    "conditional_sc_k_bounds",
    "lemma2_bounds",
    "log_uniform_costs",
    "prior_mass_multiple",
    "read_sweep_csv",
    "theoretical_limit",
    "trial_ratios",
    "truthfulness_probe",
    "worst_case_probe",
    "write_sweep_csv",
]
