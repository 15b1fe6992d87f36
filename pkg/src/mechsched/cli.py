"""Command-line entry point.

Every command prints a JSON envelope ``{command, parameters, results,
version}`` with sorted keys to stdout (``--quiet`` suppresses it). Exit
codes: 0 success, 2 input parse error, 3 domain validation error, 4 I/O
error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict
from typing import Any, Sequence

import numpy as np

from . import __version__
from .analysis import (
    SimulationConfig,
    convergence_sweep,
    dominance_probe,
    estimate_average_ratio,
    theoretical_limit,
    truthfulness_probe,
    write_sweep_csv,
)
from .core import CostParseError, MechSchedError, parse_inline_costs, read_cost_csv
from .distributions import SPEC_GRAMMAR, DistributionSpec, SpecParseError
from .mechanisms import DEFAULT_FACTORS, MechanismId, allocate, compare_batch

EXIT_OK, EXIT_PARSE, EXIT_DOMAIN, EXIT_IO = 0, 2, 3, 4
TRUTH_TOL = 1e-9
DOMINANCE_TOL = 1e-9


class ArgParseError(MechSchedError):
    pass


def envelope(command: str, parameters: dict, results: Any) -> dict:
    return {"command": command, "parameters": parameters, "results": results, "version": __version__}


def dumps(env: dict) -> str:
    return json.dumps(env, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _floats(a) -> Any:
    return np.asarray(a, dtype=np.float64).tolist()


def _parse_kv(text: str, required: Sequence[str], defaults: dict | None = None) -> dict[str, int]:
    out = dict(defaults or {})
    for item in text.split(","):
        if not item.strip():
            continue
        key, eq, val = item.partition("=")
        key = key.strip().lower()
        if not eq or key not in required:
            raise ArgParseError(f"unexpected item {item.strip()!r}; expected keys {', '.join(required)}")
        try:
            out[key] = int(val)
        except ValueError:
            raise ArgParseError(f"{key} must be an integer, got {val.strip()!r}") from None
    missing = [k for k in required if k not in out]
    if missing:
        raise ArgParseError(f"missing {', '.join(missing)} in {text!r}")
    return out


def _parse_float_list(text: str, what: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ArgParseError(f"{what} must be a comma-separated list of numbers, got {text!r}") from None
    if not vals:
        raise ArgParseError(f"{what} is empty")
    return vals


def _parse_int_list(text: str, what: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ArgParseError(f"{what} must be a comma-separated list of integers, got {text!r}") from None
    if not vals:
        raise ArgParseError(f"{what} is empty")
    return vals


def _load_costs(args) -> tuple[np.ndarray, dict]:
    if args.inline is not None:
        return parse_inline_costs(args.inline), {"inline": args.inline}
    if args.costs is not None:
        return read_cost_csv(args.costs, header=args.header), {"costs": args.costs, "header": args.header}
    raise ArgParseError("give --costs <path.csv> or --inline '1,2,3;4,5,6'")


def cmd_allocate(args) -> dict:
    mech = MechanismId.parse(args.mechanism)
    costs, src = _load_costs(args)
    probs = allocate(mech, costs)
    sc = (probs * costs).sum(axis=1)
    opt = costs.min(axis=1)
    results = {
        "allocation": _floats(probs),
        "social_cost": _floats(sc),
        "opt_cost": _floats(opt),
        "total_social_cost": math.fsum(sc),
        "total_opt_cost": math.fsum(opt),
    }
    return envelope("allocate", {"mechanism": mech.value, **src}, results)


def cmd_compare(args) -> dict:
    if args.random is not None:
        cfg = _parse_kv(args.random, ("n", "trials", "seed"))
        if cfg["n"] < 1 or cfg["trials"] < 1 or cfg["seed"] < 0:
            raise MechSchedError("random mode needs n >= 1, trials >= 1, seed >= 0")
        res = dominance_probe(cfg["n"], cfg["trials"], cfg["seed"])
        gap = float(np.max(res.sc_k - res.sc_p))
        results = {
            "trials": cfg["trials"],
            "max_sc_k_minus_sc_p": gap,
            "dominance": bool(gap <= DOMINANCE_TOL),
            "threshold_ok": bool(res.threshold_ok.all()),
        }
        return envelope("compare", {"random": cfg, "low": 1e-3, "high": 1e3}, results)
    costs, src = _load_costs(args)
    res = compare_batch(costs)
    instances = [
        {
            "sc_k": float(res.sc_k[j]),
            "sc_p": float(res.sc_p[j]),
            "l": int(res.l[j]),
            "dominance": bool(res.sc_k[j] <= res.sc_p[j] + DOMINANCE_TOL),
            "threshold_ok": bool(res.threshold_ok[j]),
        }
        for j in range(costs.shape[0])
    ]
    return envelope("compare", src, {"instances": instances})


def _specs(args) -> list[DistributionSpec]:
    if not args.dist:
        raise ArgParseError(f"give at least one --dist ({SPEC_GRAMMAR})")
    return [DistributionSpec.parse(d) for d in args.dist]


def cmd_ratio(args) -> dict:
    specs = _specs(args)
    cfg = SimulationConfig(
        n=args.n, specs=specs, trials=args.trials, master_seed=args.seed, mechanism=args.mechanism
    )
    est = estimate_average_ratio(cfg)
    results = asdict(est)
    results["warning"] = None
    if abs(est.mean - est.theoretical_limit) > 4 * est.std_error:
        results["warning"] = (
            f"mean {est.mean:.6g} is more than 4 standard errors from the large-n limit "
            f"{est.theoretical_limit:.6g} (finite-n bias or too few trials)"
        )
    params = {
        "mechanism": cfg.mechanism.value,
        "dist": [str(s) for s in specs],
        "n": cfg.n,
        "trials": cfg.trials,
        "seed": cfg.master_seed,
    }
    return envelope("ratio", params, results)


def cmd_sweep(args) -> dict:
    specs = _specs(args)
    n_values = _parse_int_list(args.n_list, "--n-list")
    base = SimulationConfig(n=max(n_values), specs=specs, trials=args.trials, master_seed=args.seed)
    rows = convergence_sweep(base, n_values)
    write_sweep_csv(rows, args.out)
    last = rows[-1]
    results = {
        "out": args.out,
        "rows": len(rows),
        "limit": theoretical_limit(specs),
        "final_n": last.n,
        "final_gap_k": abs(last.mean_k - last.limit),
        "final_gap_p": abs(last.mean_p - last.limit),
        "final_gap_k_p": abs(last.mean_k - last.mean_p),
    }
    params = {
        "dist": [str(s) for s in specs],
        "n_list": sorted(set(n_values)),
        "trials": args.trials,
        "seed": args.seed,
        "out": args.out,
    }
    return envelope("sweep", params, results)


def cmd_truthfulness(args) -> dict:
    mech = MechanismId.parse(args.mechanism)
    cfg = _parse_kv(args.random, ("n", "m", "trials", "seed"), {"n": 5, "m": 2, "trials": 1000, "seed": 0})
    if min(cfg["n"], cfg["m"], cfg["trials"]) < 1 or cfg["seed"] < 0:
        raise MechSchedError("random mode needs n, m, trials >= 1 and seed >= 0")
    factors = _parse_float_list(args.factors, "--factors")
    gap = truthfulness_probe(mech, cfg["n"], cfg["m"], cfg["trials"], cfg["seed"], factors)
    results = {"min_gap": gap, "pass": bool(gap >= -TRUTH_TOL), "tolerance": TRUTH_TOL}
    return envelope("truthfulness", {"mechanism": mech.value, "random": cfg, "factors": factors}, results)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mechsched",
        description="Truthful scheduling mechanisms K and P: allocations, comparisons and average-case ratios.",
        epilog=f"distribution spec grammar:\n  {SPEC_GRAMMAR}\n\n"
        "MECHSCHED_THREADS caps worker threads; results are identical for any value.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, mechs=("k", "p", "opt"), mech_required=True):
        if mechs:
            p.add_argument("--mechanism", type=str.lower, choices=mechs, required=mech_required)
        p.add_argument("--quiet", action="store_true", help="suppress the JSON envelope")

    def cost_source(p):
        p.add_argument("--costs", metavar="PATH", help="CSV, one row per task, one column per machine")
        p.add_argument("--inline", metavar="TEXT", help="e.g. '1,2,3;4,5,6' (';' separates tasks)")
        p.add_argument("--header", action="store_true", help="skip the first CSV row")

    dist_help = f"task distribution, repeat once per task: {SPEC_GRAMMAR}"

    p = sub.add_parser("allocate", help="allocation probabilities and social costs")
    common(p)
    cost_source(p)
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("compare", help="K vs P on given or random instances")
    common(p, mechs=())
    cost_source(p)
    p.add_argument("--random", metavar="n=<int>,trials=<int>,seed=<int>")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser(
        "ratio",
        help="Monte Carlo average-case ratio",
        epilog=f"spec grammar: {SPEC_GRAMMAR}",
    )
    common(p)
    p.add_argument("--dist", action="append", help=dist_help)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ratio)

    p = sub.add_parser("sweep", help="K and P ratios over several n, written as CSV")
    common(p, mechs=())
    p.add_argument("--dist", action="append", help=dist_help)
    p.add_argument("--n-list", required=True, metavar="10,100,1000")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, metavar="PATH")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("truthfulness", help="spot-check misreports on a multiplicative grid")
    common(p, mechs=("k", "p"))
    p.add_argument("--random", default="", metavar="n=<int>,m=<int>,trials=<int>,seed=<int>")
    p.add_argument("--factors", default=",".join(str(f) for f in DEFAULT_FACTORS))
    p.set_defaults(func=cmd_truthfulness)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        env = args.func(args)
    except (CostParseError, SpecParseError, ArgParseError) as exc:
        print(f"mechsched: error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValueError as exc:
        print(f"mechsched: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"mechsched: error: {exc}", file=sys.stderr)
        return EXIT_IO
    if not args.quiet:
        sys.stdout.write(dumps(env))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
