"""Command-line front end: ``multisteer <command> ...``.

Every output embeds the full configuration (including the seed) and contains no
timestamps, so identical invocations produce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .angles import DEConfig, angle_table_csv, optimize_angles
from .bounds import (
    InfeasibleAssemblage,
    OutOfRange,
    analytic_cutoff,
    cutoff_efficiency,
    cutoff_sweep,
    family_assemblage,
    max_steerable_bobs,
    steering_verdict,
    sweep_csv,
    symmetric_cutoff,
)
from .certificate import CertificateError
from .conic import ConicError
from .hypothesis import hypothesis_test, suite_test
from .states import StateFamilyParams, reduced_pair
from .tomography import (
    analyse_counts,
    assemblage_matrices,
    mle_assemblage,
    monte_carlo_errorbars,
    records_from_csv,
    records_to_csv,
    simulate_experiment,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    pass


def parse_range(text: str) -> list[float]:
    """``start:stop:step`` (stop inclusive) or a comma-separated list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"range {text!r} must be start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ConfigError(f"range {text!r} is empty")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(count)]
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse {text!r} as numbers") from exc


def parse_ints(text: str) -> list[int]:
    vals = parse_range(text)
    if any(v != int(v) for v in vals):
        raise ConfigError(f"{text!r} must contain integers")
    return [int(v) for v in vals]


def _config(args: argparse.Namespace) -> dict:
    skip = {"func", "output"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _header(args) -> list[str]:
    return [f"multisteer {__version__}", "config: " + json.dumps(_config(args), sort_keys=True)]


def _json(args, payload: dict) -> str:
    return json.dumps({"config": _config(args), "version": __version__, **payload}, indent=2, sort_keys=True) + "\n"


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")


def _check_common(args) -> None:
    if getattr(args, "n", 2) < 2:
        raise ConfigError("N must be at least 2")
    eta = getattr(args, "eta", 1.0)
    if not 0.0 < eta <= 1.0:
        raise ConfigError(f"eta must lie in (0, 1], got {eta}")
    if getattr(args, "jobs", 1) < 1:
        raise ConfigError("jobs must be positive")
    if getattr(args, "seed", 0) < 0:
        raise ConfigError("seed must be nonnegative")


# ---------------------------------------------------------------------------
# commands


def cmd_cutoff(args) -> str:
    _check_alpha(args.alpha)
    if args.method == "analytic":
        if args.eta != 1.0:
            raise ConfigError("the closed form holds only for eta = 1")
        value, gap = analytic_cutoff(args.alpha, args.n), 0.0
    else:
        a = family_assemblage(args.alpha, args.n, args.eta)
        r = symmetric_cutoff(a) if args.method == "symmetric" else cutoff_efficiency(a)
        value, gap = r.epsilon_star, r.gap
    if args.format == "json":
        return _json(args, {"epsilon_star": value, "gap": gap})
    if args.format == "csv":
        lines = [f"# {h}" for h in _header(args)]
        lines += ["alpha,N,eta,method,epsilon_star", f"{args.alpha!r},{args.n},{args.eta!r},{args.method},{value:.10f}"]
        return "\n".join(lines) + "\n"
    return f"{value:.6f}\n"


def cmd_sweep(args) -> str:
    alphas = parse_range(args.alphas)
    for a in alphas:
        _check_alpha(a)
    ns = parse_ints(args.n_values)
    if min(ns) < 2:
        raise ConfigError("N must be at least 2")
    de = DEConfig(population=args.population, generations=args.generations, seed=args.seed)
    rows = cutoff_sweep(alphas, ns, args.eta, args.settings, args.jobs, de)
    if args.format == "json":
        return _json(args, {"rows": [r.__dict__ for r in rows]})
    return sweep_csv(rows, _header(args))


def cmd_optimize_angles(args) -> str:
    alphas = parse_range(args.alphas)
    for a in alphas:
        _check_alpha(a)
    de = DEConfig(population=args.population, generations=args.generations, seed=args.seed)
    out = []
    for a in alphas:
        rho = reduced_pair(StateFamilyParams(a, args.n, args.eta), args.bob)
        out.append((a, optimize_angles(rho, 3, de)))
    if args.format == "json":
        return _json(
            args,
            {
                "rows": [
                    {"alpha": a, "angles_deg": r.degrees(), "epsilon_star": r.epsilon_star, "pauli_epsilon_star": r.pauli_epsilon_star}
                    for a, r in out
                ]
            },
        )
    return angle_table_csv(out, _header(args))


def cmd_simulate(args) -> str:
    _check_alpha(args.alpha)
    if not 0.0 < args.eps <= 1.0:
        raise ConfigError(f"efficiency must lie in (0, 1], got {args.eps}")
    if args.shots < 1:
        raise ConfigError("shots must be positive")
    recs = simulate_experiment(StateFamilyParams(args.alpha, args.n, args.eta), args.eps, args.shots, args.seed)
    return records_to_csv(recs.values(), _header(args))


def _read_records(path: str):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        return records_from_csv(text)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"malformed count file {path}: {exc}") from exc


def _analyse(records, reps: int, seed: int, jobs: int) -> list[dict]:
    rows = []
    for c in records:
        eps, cut, fit = analyse_counts(c)
        row = {
            "alpha": c.alpha,
            "bob": c.bob,
            "epsilon_exp": eps,
            "epsilon_star": cut,
            "steered": steering_verdict(eps, cut),
            "log_likelihood": fit.log_likelihood,
            "stationarity": fit.stationarity,
            "assemblage": assemblage_matrices(fit.assemblage),
        }
        if reps:
            eb = monte_carlo_errorbars(c, reps, rng_seed=seed + (c.bob or 0), jobs=jobs)
            row["errorbars"] = eb.as_dict()
        rows.append(row)
    return rows


def cmd_tomography(args) -> str:
    if args.reps == 1 or args.reps < 0:
        raise ConfigError("reps must be 0 (off) or at least 2")
    rows = _analyse(_read_records(args.input), args.reps, args.seed, args.jobs)
    if args.format == "json":
        return _json(args, {"records": rows})
    lines = [f"# {h}" for h in _header(args)]
    lines.append("alpha,bob,epsilon_exp,epsilon_star,steered,epsilon_exp_std,epsilon_star_std")
    for r in rows:
        eb = r.get("errorbars", {})
        lines.append(
            f"{r['alpha']!r},{r['bob']},{r['epsilon_exp']:.8f},{r['epsilon_star']:.8f},{str(r['steered']).lower()},"
            f"{eb.get('epsilon_exp_std', float('nan')):.6f},{eb.get('epsilon_star_std', float('nan')):.6f}"
        )
    return "\n".join(lines) + "\n"


def cmd_verdict(args) -> str:
    if args.input is None:
        if args.eps_exp is None or args.cutoff is None:
            raise ConfigError("give either --input or both --eps-exp and --cutoff")
        rows = [{"alpha": None, "bob": None, "epsilon_exp": args.eps_exp, "epsilon_star": args.cutoff,
                 "steered": steering_verdict(args.eps_exp, args.cutoff)}]
    else:
        rows = [
            {k: r[k] for k in ("alpha", "bob", "epsilon_exp", "epsilon_star", "steered")}
            for r in _analyse(_read_records(args.input), 0, args.seed, 1)
        ]
    if args.format == "json":
        return _json(args, {"verdicts": rows})
    lines = [f"# {h}" for h in _header(args)] + ["alpha,bob,epsilon_exp,epsilon_star,steered"]
    for r in rows:
        lines.append(f"{r['alpha']!r},{r['bob']},{r['epsilon_exp']:.8f},{r['epsilon_star']:.8f},{str(r['steered']).lower()}")
    return "\n".join(lines) + "\n"


def cmd_hypothesis_test(args) -> str:
    if not 0.0 < args.significance < 1.0:
        raise ConfigError("significance must lie in (0, 1)")
    records = _read_records(args.input)
    pairs = [(c, mle_assemblage(c).assemblage) for c in records]
    exclude = parse_range(args.exclude_alphas) if args.exclude_alphas else []
    pooled = suite_test(pairs, args.significance, args.min_group_counts, exclude)
    per = [
        {"alpha": c.alpha, "bob": c.bob, **json.loads(hypothesis_test(c, fit, args.significance).to_json())}
        for c, fit in pairs
    ]
    if args.format == "json":
        return _json(args, {"pooled": json.loads(pooled.to_json()), "records": per})
    lines = [f"# {h}" for h in _header(args)] + ["scope,alpha,bob,statistic,dof,critical_value,accepted"]
    for r in per:
        lines.append(f"record,{r['alpha']!r},{r['bob']},{float(r['statistic']):.6f},{r['dof']},{r['critical_value']:.6f},{str(r['accepted']).lower()}")
    lines.append(f"pooled,,,{pooled.statistic:.6f},{pooled.dof},{pooled.critical_value:.6f},{str(pooled.accepted).lower()}")
    return "\n".join(lines) + "\n"


def cmd_scalability(args) -> str:
    alphas = parse_range(args.alphas)
    for a in alphas:
        _check_alpha(a)
    if args.n_max < 2:
        raise ConfigError("n-max must be at least 2")
    de = DEConfig(population=args.population, generations=args.generations, seed=args.seed)
    rep = max_steerable_bobs(args.eta, alphas, args.n_max, args.optimized, args.jobs, de)
    summary = {
        "largest_steerable": rep.largest_steerable,
        "min_cutoff": [
            {"settings_kind": k, "N": n, "alpha": a, "epsilon_star": e} for (k, n), (a, e) in sorted(rep.min_cutoff.items())
        ],
    }
    if args.format == "json":
        return _json(args, {**summary, "rows": [r.__dict__ for r in rep.rows]})
    head = _header(args) + ["largest_steerable: " + json.dumps(rep.largest_steerable, sort_keys=True)]
    return sweep_csv(rep.rows, head)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multisteer", description="Loss-tolerant multi-party steering toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, fmt_default="csv", fmts=("csv", "json")):
        sp.add_argument("--format", choices=fmts, default=fmt_default)
        sp.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
        sp.add_argument("--output", "-o", default=None, help="write here instead of stdout")

    def de_flags(sp):
        sp.add_argument("--population", type=int, default=30)
        sp.add_argument("--generations", type=int, default=200)

    sp = sub.add_parser(
        "cutoff",
        help="cutoff efficiency at one (alpha, N)",
        description="Print the cutoff efficiency. Text format prints the value to 6 decimals; "
        "CSV columns: alpha,N,eta,method,epsilon_star.",
    )
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--n", type=int, default=2)
    sp.add_argument("--eta", type=float, default=1.0)
    sp.add_argument("--method", choices=("analytic", "sdp", "symmetric"), default="analytic")
    common(sp, "text", ("text", "csv", "json"))
    sp.set_defaults(func=cmd_cutoff)

    sp = sub.add_parser(
        "sweep",
        help="cutoff efficiency over an alpha grid",
        description="CSV columns: N,alpha,eta,settings_kind,epsilon_star,gap,status.",
    )
    sp.add_argument("--n", dest="n_values", default="2", help="N values: list or start:stop:step")
    sp.add_argument("--alphas", default="0.01:0.65:0.01")
    sp.add_argument("--eta", type=float, default=1.0)
    sp.add_argument("--settings", choices=("pauli", "optimized"), default="pauli")
    sp.add_argument("--jobs", type=int, default=1)
    de_flags(sp)
    common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser(
        "optimize-angles",
        help="search Alice's measurement directions",
        description="CSV columns (degrees): alpha,theta1,phi1,theta2,phi2,theta3,phi3,epsilon_star.",
    )
    sp.add_argument("--alphas", default="0.1")
    sp.add_argument("--n", type=int, default=2)
    sp.add_argument("--bob", type=int, default=1)
    sp.add_argument("--eta", type=float, default=1.0)
    de_flags(sp)
    common(sp)
    sp.set_defaults(func=cmd_optimize_angles)

    sp = sub.add_parser(
        "simulate",
        help="simulate count tables for every Bob",
        description="CSV columns: alpha,bob,x,a,y,b,count (a in +,-,null; b in +,-; y indexes Bob's z,x,y bases).",
    )
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--n", type=int, default=2)
    sp.add_argument("--eta", type=float, default=1.0)
    sp.add_argument("--eps", type=float, required=True, help="programmed detection efficiency")
    sp.add_argument("--shots", type=int, default=100_000, help="shots per (x, y) group")
    common(sp, "csv", ("csv",))
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser(
        "tomography",
        help="reconstruct assemblages from counts and bound the efficiency",
        description="CSV columns: alpha,bob,epsilon_exp,epsilon_star,steered,epsilon_exp_std,epsilon_star_std.",
    )
    sp.add_argument("input", help="count CSV")
    sp.add_argument("--reps", type=int, default=0, help="Monte Carlo repetitions for error bars (0 = off)")
    sp.add_argument("--jobs", type=int, default=1)
    common(sp, "json")
    sp.set_defaults(func=cmd_tomography)

    sp = sub.add_parser(
        "verdict",
        help="steering verdict from counts or from (eps_exp, cutoff)",
        description="CSV columns: alpha,bob,epsilon_exp,epsilon_star,steered.",
    )
    sp.add_argument("input", nargs="?", default=None, help="count CSV")
    sp.add_argument("--eps-exp", type=float, default=None)
    sp.add_argument("--cutoff", type=float, default=None)
    common(sp)
    sp.set_defaults(func=cmd_verdict)

    sp = sub.add_parser(
        "hypothesis-test",
        help="likelihood-ratio test of the reconstructed assemblages",
        description="CSV columns: scope,alpha,bob,statistic,dof,critical_value,accepted.",
    )
    sp.add_argument("input", help="count CSV")
    sp.add_argument("--significance", type=float, default=0.05)
    sp.add_argument("--exclude-alphas", default="", help="alphas left out of the pooled test")
    sp.add_argument("--min-group-counts", type=int, default=0, help="drop records with a smaller (x, y) group")
    common(sp, "json")
    sp.set_defaults(func=cmd_hypothesis_test)

    sp = sub.add_parser(
        "scalability",
        help="largest number of steerable Bobs under noise",
        description="CSV columns as for sweep; the header records the largest steerable N.",
    )
    sp.add_argument("--eta", type=float, default=0.9931)
    sp.add_argument("--n-max", type=int, default=12)
    sp.add_argument("--alphas", default="0.01:0.65:0.01")
    sp.add_argument("--optimized", action="store_true", help="also run the angle search per point (slow)")
    sp.add_argument("--jobs", type=int, default=1)
    de_flags(sp)
    common(sp)
    sp.set_defaults(func=cmd_scalability)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _check_common(args)
        out = args.func(args)
    except (ConfigError, OutOfRange) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleAssemblage, ConicError, CertificateError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
