"""Per-task cost distributions, counter-based random streams and mu_s.

Three families, all supported on [t_min, ...):

* Pareto:              F(t) = 1 - (t_min / t)^alpha
* shifted exponential: F(t) = 1 - exp(-lambda (t - t_min))
* uniform:             F(t) = (t - t_min) / (t_max - t_min)

Sampling is inverse-transform everywhere, so conditioning on t >= s is a
shift in uniform space: u -> F(s) + u (1 - F(s)).

Text grammar (kind token case-insensitive, parameters in any order)::

    pareto:tmin=<f>,alpha=<f> | exp:tmin=<f>,lambda=<f> | uniform:tmin=<f>,tmax=<f>
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .core import MechSchedError
from .special import exp_integral_e1, scaled_e1

SPEC_GRAMMAR = (
    "pareto:tmin=<f>,alpha=<f> | exp:tmin=<f>,lambda=<f> | uniform:tmin=<f>,tmax=<f>"
)

PARETO = "pareto"
EXPONENTIAL = "exp"
UNIFORM = "uniform"

_SHAPE_KEY = {PARETO: "alpha", EXPONENTIAL: "lambda", UNIFORM: "tmax"}
_KIND_ALIASES = {
    "pareto": PARETO,
    "exp": EXPONENTIAL,
    "exponential": EXPONENTIAL,
    "shiftedexponential": EXPONENTIAL,
    "uniform": UNIFORM,
}

MU_QUAD_TOL = 1e-10


class SpecParseError(MechSchedError):
    pass


@dataclass(frozen=True)
class DistributionSpec:
    """``shape`` is alpha (Pareto), lambda (exp) or t_max (uniform)."""

    kind: str
    t_min: float
    shape: float

    def __post_init__(self):
        kind = _KIND_ALIASES.get(str(self.kind).lower())
        if kind is None:
            raise MechSchedError(f"unknown distribution kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "t_min", float(self.t_min))
        object.__setattr__(self, "shape", float(self.shape))
        if not (math.isfinite(self.t_min) and self.t_min > 0):
            raise MechSchedError(f"t_min must be finite and > 0, got {self.t_min!r}")
        if kind == UNIFORM:
            if not (math.isfinite(self.shape) and self.shape > self.t_min):
                raise MechSchedError(f"uniform needs t_max > t_min, got t_max={self.shape!r}")
        elif not (math.isfinite(self.shape) and self.shape > 0):
            raise MechSchedError(f"{_SHAPE_KEY[kind]} must be finite and > 0, got {self.shape!r}")

    @classmethod
    def pareto(cls, t_min: float, alpha: float) -> "DistributionSpec":
        return cls(PARETO, t_min, alpha)

    @classmethod
    def exponential(cls, t_min: float, lam: float) -> "DistributionSpec":
        return cls(EXPONENTIAL, t_min, lam)

    @classmethod
    def uniform(cls, t_min: float, t_max: float) -> "DistributionSpec":
        return cls(UNIFORM, t_min, t_max)

    @classmethod
    def parse(cls, text: str) -> "DistributionSpec":
        kind_tok, sep, rest = text.strip().partition(":")
        kind = _KIND_ALIASES.get(kind_tok.strip().lower())
        if kind is None or not sep:
            raise SpecParseError(f"bad distribution spec {text!r}; grammar: {SPEC_GRAMMAR}")
        wanted = {"tmin", _SHAPE_KEY[kind]}
        params: dict[str, float] = {}
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            key = key.strip().lower()
            if not eq or key not in wanted:
                raise SpecParseError(f"unexpected parameter {item.strip()!r} for {kind}; grammar: {SPEC_GRAMMAR}")
            if key in params:
                raise SpecParseError(f"parameter {key!r} given twice in {text!r}")
            try:
                params[key] = float(val)
            except ValueError:
                raise SpecParseError(f"parameter {key!r} is not a number: {val.strip()!r}") from None
        missing = wanted - params.keys()
        if missing:
            raise SpecParseError(f"missing {sorted(missing)} in {text!r}; grammar: {SPEC_GRAMMAR}")
        try:
            return cls(kind, params["tmin"], params[_SHAPE_KEY[kind]])
        except MechSchedError as exc:
            raise SpecParseError(str(exc)) from None

    def __str__(self) -> str:
        return f"{self.kind}:tmin={self.t_min!r},{_SHAPE_KEY[self.kind]}={self.shape!r}"


class RandomStream:
    """Counter-based uniform stream keyed by (master seed, stream index).

    Backed by Philox-4x64 with the 128-bit key set to the pair directly, so
    a stream's output depends on nothing but its key and how much of it has
    been consumed.
    """

    def __init__(self, seed: int, index: int = 0):
        if not (0 <= seed < 2**64 and 0 <= index < 2**64):
            raise MechSchedError("seed and stream index must fit in an unsigned 64-bit integer")
        self.seed = int(seed)
        self.index = int(index)
        key = np.array([self.seed, self.index], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def uniform(self, size=None):
        """Uniform draws on [0, 1)."""
        return self._gen.random(size)

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, index={self.index})"


def derive_seed(master_seed: int, *path: int) -> int:
    """A 64-bit child seed, stable for a given (master_seed, path)."""
    ss = np.random.SeedSequence([int(master_seed), *map(int, path)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def cdf(spec: DistributionSpec, t):
    t = np.asarray(t, dtype=np.float64)
    lo = spec.t_min
    tt = np.maximum(t, lo)
    if spec.kind == PARETO:
        out = 1.0 - (lo / tt) ** spec.shape
    elif spec.kind == EXPONENTIAL:
        out = -np.expm1(-spec.shape * (tt - lo))
    else:
        out = np.clip((tt - lo) / (spec.shape - lo), 0.0, 1.0)
    return out[()] if out.ndim == 0 else out


def quantile(spec: DistributionSpec, u):
    u = np.asarray(u, dtype=np.float64)
    if np.any((u < 0) | (u >= 1)) or np.any(np.isnan(u)):
        raise MechSchedError("quantile needs u in [0, 1)")
    lo = spec.t_min
    if spec.kind == PARETO:
        out = lo * (1.0 - u) ** (-1.0 / spec.shape)
    elif spec.kind == EXPONENTIAL:
        out = lo - np.log1p(-u) / spec.shape
    else:
        out = lo + u * (spec.shape - lo)
    return out[()] if out.ndim == 0 else out


def sample(spec: DistributionSpec, stream: RandomStream, size=None):
    return quantile(spec, stream.uniform(size))


def _check_condition(spec: DistributionSpec, s: float) -> tuple[float, float]:
    s = float(s)
    if not s >= spec.t_min:
        raise MechSchedError(f"conditioning point {s!r} is below t_min={spec.t_min!r}")
    fs = float(cdf(spec, s))
    if fs >= 1.0:
        raise MechSchedError(f"no mass above s={s!r} (F(s) = 1)")
    return s, fs


def conditional_sample(spec: DistributionSpec, s: float, stream: RandomStream, size=None):
    """Draw from G_s(t) = (F(t) - F(s)) / (1 - F(s)), t >= s."""
    s, fs = _check_condition(spec, s)
    u = fs + stream.uniform(size) * (1.0 - fs)
    # keep u < 1 after rounding so the quantile stays finite
    u = np.minimum(u, np.nextafter(1.0, 0.0))
    return np.maximum(quantile(spec, u), s)


def mu_s_quadrature(spec: DistributionSpec, s: float) -> float:
    """E[s / t] under G_s by adaptive Gauss-Kronrod in u = F(t) on [F(s), 1)."""
    s, fs = _check_condition(spec, s)

    def integrand(u):
        return s / float(quantile(spec, min(u, np.nextafter(1.0, 0.0))))

    val, _ = integrate.quad(integrand, fs, 1.0, epsabs=MU_QUAD_TOL, epsrel=MU_QUAD_TOL, limit=200)
    return val / (1.0 - fs)


def mu_s(spec: DistributionSpec, s: float) -> float:
    """E[s / t] for t drawn from the cost law conditioned on t >= s.

    Closed forms: the Pareto tail above s is Pareto(s, alpha), giving
    alpha / (alpha + 1); the exponential is memoryless, giving
    lambda s e^{lambda s} E1(lambda s). Uniform goes through quadrature.
    """
    s, _ = _check_condition(spec, s)
    if spec.kind == PARETO:
        return spec.shape / (spec.shape + 1.0)
    if spec.kind == EXPONENTIAL:
        x = spec.shape * s
        return x * scaled_e1(x)
    return mu_s_quadrature(spec, s)


def inverse_mean_reciprocal(spec: DistributionSpec) -> float:
    """1 / E[1 / t] for t ~ F; equals t_min / mu_s at s = t_min."""
    return spec.t_min / mu_s(spec, spec.t_min)


__all__ = [
    "DistributionSpec",
    "RandomStream",
    "SPEC_GRAMMAR",
    "SpecParseError",
    "cdf",
    "conditional_sample",
    "derive_seed",
    "exp_integral_e1",
    "inverse_mean_reciprocal",
    "mu_s",
    "mu_s_quadrature",
    "quantile",
    "sample",
]
