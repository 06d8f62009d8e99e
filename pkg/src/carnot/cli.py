"""Command-line front end: identity batteries, quotients, sweeps, uncertainty
checks, norm certification, and volume tests, with JSON/CSV reports.

Exit codes: 0 success / inequality holds, 1 detected violation beyond
tolerance, 2 usage or configuration error.  Reports echo enough of the
configuration (seed, budget, method, group, alpha, version) to rerun them,
and repeated invocations with identical flags are byte-identical.
"""

from __future__ import annotations

import argparse
import io
import math
import sys

import numpy as np

from ._version import __version__
from . import diffops, groups, hardy
from .integrate import QuadratureConfig

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# report formatting
# ---------------------------------------------------------------------------

def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def _json_value(obj) -> str:
    if isinstance(obj, dict):
        inner = ",".join(f"{_json_value(str(k))}:{_json_value(v)}" for k, v in obj.items())
        return "{" + inner + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_json_value(v) for v in obj) + "]"
    if isinstance(obj, bool) or obj is None:
        return {True: "true", False: "false", None: "null"}[obj]
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return '"' + obj.replace("\\", "\\\\").replace('"', '\\"') + '"'
    raise TypeError(f"cannot serialize {type(obj)!r}")


def _flatten(prefix: str, value, out: dict):
    if isinstance(value, dict):
        for k, v in value.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    else:
        out[prefix] = value


def _csv_cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        x = float(v)
        if math.isnan(x) or math.isinf(x):
            return str(x)
        return format(x, ".17g")
    if v is None:
        return ""
    return str(v)


def emit(report, format: str = "json") -> str:
    """Serialize a report object (or dict) to JSON or CSV text.

    JSON is a single object with stable key order; CSV emits a header row
    plus one row per entry for tabular reports.  Numbers carry 17
    significant digits so parsing reproduces every field bit-exactly."""
    data = report.to_dict() if hasattr(report, "to_dict") else report
    if format == "json":
        return _json_value(data) + "\n"
    if format != "csv":
        raise ConfigError(f"unknown output format {format!r}")
    rows = None
    for key in ("rows", "checks", "volumes"):
        if isinstance(data, dict) and isinstance(data.get(key), list):
            rows = data[key]
            break
    if rows is None:
        rows = [data]
    flat_rows = []
    for row in rows:
        flat: dict = {}
        _flatten("", row, flat)
        flat_rows.append(flat)
    header: list[str] = []
    for flat in flat_rows:
        for k in flat:
            if k not in header:
                header.append(k)
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for flat in flat_rows:
        buf.write(",".join(_csv_cell(flat.get(k)) for k in header) + "\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="carnot",
                                description="Calculus and sharp Hardy quotients on Carnot groups")
    p.add_argument("--version", action="version", version=f"carnot {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, group=True, budget=100_000):
        if group:
            sp.add_argument("--group", required=True,
                            help="built-in name (h1, h2, quaternionic-h1, abelian-3, ...) "
                                 "or a JSON spec file path")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--budget", type=int, default=budget)
        sp.add_argument("--tol", type=float, default=1e-3)
        sp.add_argument("--output", choices=("json", "csv"), default="json")

    sp = sub.add_parser("groups", help="list built-in groups")
    sp.add_argument("--output", choices=("json", "csv"), default="json")

    sp = sub.add_parser("sharp-constant", help="the sharp constant ((Q+alpha-2)/2)^2")
    sp.add_argument("--Q", type=float, required=True)
    sp.add_argument("--alpha", type=float, default=0.0)
    sp.add_argument("--output", choices=("json", "csv"), default="json")

    sp = sub.add_parser("quotient", help="Rayleigh quotient of one test function")
    common(sp, budget=1_000_000)
    sp.add_argument("--alpha", type=float, default=0.0)
    sp.add_argument("--method", choices=("radial", "full"), default="radial")
    sp.add_argument("--profile", choices=("sin", "bump"), default="sin")
    sp.add_argument("--L", type=float, default=math.log(100.0),
                    help="log-radius window width for the sin profile")
    sp.add_argument("--r-in", type=float, default=1.0)
    sp.add_argument("--beta", type=float, default=None,
                    help="radial exponent (default: the optimal (2-Q-alpha)/2)")
    sp.add_argument("--bump-seed", type=int, default=None,
                    help="seed for a random bump profile (bump profile only)")
    sp.add_argument("--quadrature", choices=("monte_carlo", "quasi_monte_carlo"),
                    default="monte_carlo")

    sp = sub.add_parser("sweep", help="sharpness sweep over log-window widths")
    common(sp)
    sp.add_argument("--alpha", type=float, default=0.0)
    sp.add_argument("--decades", type=str, default="1,2,3,4,5,6",
                    help="comma list k; uses L = ln(10^k)")
    sp.add_argument("--L-grid", type=str, default=None,
                    help="explicit comma list of L values (overrides --decades)")
    sp.add_argument("--r-in", type=float, default=1.0)

    sp = sub.add_parser("uncertainty", help="uncertainty-principle check on random bumps")
    common(sp, budget=200_000)
    sp.add_argument("--count", type=int, default=10)

    sp = sub.add_parser("certify-norm", help="certify a candidate homogeneous norm")
    common(sp, budget=2000)
    sp.add_argument("--candidate", choices=("self", "mixed-quadratic", "skewed-quartic"),
                    default="self")

    sp = sub.add_parser("volume", help="Monte-Carlo norm-ball volumes")
    common(sp, budget=1_000_000)
    sp.add_argument("--radius", type=float, action="append", required=True,
                    help="ball radius (repeatable; two radii add an R^Q scaling check)")
    sp.add_argument("--quadrature", choices=("monte_carlo", "quasi_monte_carlo"),
                    default="monte_carlo")

    sp = sub.add_parser("check-identities", help="group-axiom and differential-identity battery")
    common(sp, budget=100_000)
    sp.add_argument("--points", type=int, default=1000)
    return p


def _load_group(name: str) -> groups.GroupSpec:
    try:
        return groups.load_group(name)
    except (KeyError, FileNotFoundError, ValueError) as exc:
        raise ConfigError(f"cannot resolve group {name!r}: {exc}") from exc


def _cfg(args, method="monte_carlo") -> QuadratureConfig:
    try:
        return QuadratureConfig(method=method, budget=args.budget,
                                seed=args.seed, target_rel_tol=args.tol)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_groups(args) -> tuple[dict, int]:
    rows = [groups.builtin_group(name).to_dict() for name in groups.builtin_names()]
    return {"rows": rows, "config": {"version": __version__}}, EXIT_OK


def _cmd_sharp_constant(args) -> tuple[dict, int]:
    try:
        c = hardy.sharp_constant(args.Q, args.alpha)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report = {
        "constant": c,
        "optimal_beta": hardy.optimal_beta(args.Q, args.alpha),
        "config": {"Q": args.Q, "alpha": args.alpha, "version": __version__},
    }
    return report, EXIT_OK


def _cmd_quotient(args) -> tuple[dict, int]:
    g = _load_group(args.group)
    try:
        problem = hardy.HardyProblem(g, args.alpha)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.profile == "sin":
        phi = hardy.sin_test_function(g.Q, args.alpha, args.L, args.r_in, beta=args.beta)
    else:
        if args.method == "radial":
            raise ConfigError("bump profiles require --method full")
        phi = hardy.random_bump(g, args.seed if args.bump_seed is None else args.bump_seed)
    cfg = _cfg(args, method=args.quadrature)
    try:
        if args.method == "radial":
            rep = hardy.rayleigh_quotient(problem, phi, cfg, method="radial_1d")
        else:
            rep = hardy.rayleigh_quotient(problem, phi, cfg, method="full_dim")
    except hardy.DegenerateTestFunctionError as exc:
        raise ConfigError(str(exc)) from exc
    violation = rep.quotient < rep.sharp_constant - 3.0 * rep.quotient_error
    return rep.to_dict(), (EXIT_VIOLATION if violation else EXIT_OK)


def _cmd_sweep(args) -> tuple[dict, int]:
    g = _load_group(args.group)
    try:
        problem = hardy.HardyProblem(g, args.alpha)
        if args.L_grid:
            L_grid = [float(x) for x in args.L_grid.split(",")]
        else:
            L_grid = [math.log(10.0 ** float(k)) for k in args.decades.split(",")]
        sweep = hardy.sharpness_sweep(problem, L_grid, _cfg(args), r_in=args.r_in)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    bad = any(r.quotient < sweep.sharp_constant - 1e-9 for r in sweep.rows)
    return sweep.to_dict(), (EXIT_VIOLATION if bad else EXIT_OK)


def _cmd_uncertainty(args) -> tuple[dict, int]:
    g = _load_group(args.group)
    if g.Q < 3:
        raise ConfigError("uncertainty principle needs Q >= 3")
    cfg = _cfg(args)
    rows = []
    all_ok = True
    for i in range(args.count):
        phi = hardy.random_bump(g, hardy._mix_seed(args.seed, i))
        rep = hardy.uncertainty_check(g, phi, cfg)
        entry = rep.to_dict()
        entry["index"] = i
        del entry["config"]
        rows.append(entry)
        all_ok = all_ok and rep.ok
    report = {"rows": rows, "passed": all_ok,
              "config": hardy._config_echo(cfg, g, None, "uncertainty")}
    return report, (EXIT_OK if all_ok else EXIT_VIOLATION)


def _cmd_certify_norm(args) -> tuple[dict, int]:
    g = _load_group(args.group)
    cfg = _cfg(args)
    if args.candidate == "self":
        candidate = diffops.NormField(g)
    elif args.candidate == "mixed-quadratic":
        candidate = hardy.mixed_quadratic_norm(g)
    else:
        candidate = hardy.skewed_quartic_norm(g)
    try:
        cert = hardy.certify_norm(g, candidate, cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    data = cert.to_dict()
    data["config"]["candidate"] = args.candidate
    return data, (EXIT_OK if cert.passed else EXIT_VIOLATION)


def _cmd_volume(args) -> tuple[dict, int]:
    g = _load_group(args.group)
    cfg = _cfg(args, method=args.quadrature)
    radii = args.radius
    if any(r <= 0 for r in radii):
        raise ConfigError("radii must be positive")
    vols = []
    for i, R in enumerate(radii):
        res = groups.ball_volume(g, R, QuadratureConfig(
            method=cfg.method, budget=cfg.budget,
            seed=hardy._mix_seed(cfg.seed, i), target_rel_tol=cfg.target_rel_tol))
        entry = res.to_dict()
        entry["radius"] = R
        vols.append(entry)
    report = {"volumes": vols, "config": hardy._config_echo(cfg, g, None, "volume")}
    code = EXIT_OK
    if len(radii) >= 2:
        ratios = []
        for a in range(len(radii)):
            for b in range(a + 1, len(radii)):
                va, vb = vols[a], vols[b]
                ratio = vb["value"] / va["value"]
                sigma = abs(ratio) * math.sqrt(
                    (va["error_estimate"] / va["value"]) ** 2
                    + (vb["error_estimate"] / vb["value"]) ** 2
                )
                predicted = (radii[b] / radii[a]) ** g.Q
                dev = (ratio - predicted) / sigma if sigma > 0 else math.inf
                ratios.append({"R_small": radii[a], "R_large": radii[b],
                               "ratio": ratio, "predicted": predicted,
                               "sigma": sigma, "deviation_sigmas": dev})
                if abs(dev) > 3.0:
                    code = EXIT_VIOLATION
        report["ratios"] = ratios
    return report, code


def _cmd_check_identities(args) -> tuple[dict, int]:
    g = _load_group(args.group)
    checks = groups.run_group_axiom_battery(g, args.points, args.seed)
    checks += diffops.run_identity_battery(g, args.points, args.seed)
    passed = all(c.passed for c in checks)
    report = {
        "checks": [c.to_dict() for c in checks],
        "passed": passed,
        "config": {"group": g.name, "points": args.points, "seed": args.seed,
                   "version": __version__},
    }
    return report, (EXIT_OK if passed else EXIT_VIOLATION)


_COMMANDS = {
    "groups": _cmd_groups,
    "sharp-constant": _cmd_sharp_constant,
    "quotient": _cmd_quotient,
    "sweep": _cmd_sweep,
    "uncertainty": _cmd_uncertainty,
    "certify-norm": _cmd_certify_norm,
    "volume": _cmd_volume,
    "check-identities": _cmd_check_identities,
}


def run(argv: list[str] | None = None, stdout=None, stderr=None) -> int:
    """Execute one CLI invocation; returns the process exit code."""
    stdout = stdout if stdout is not None else sys.stdout
    stderr = stderr if stderr is not None else sys.stderr
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage; normalize --help to 0, errors to 2
        return int(exc.code or 0)
    try:
        report, code = _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_USAGE
    except hardy.InequalityViolation as exc:
        print(f"violation: {exc}", file=stderr)
        print(emit({"violation": str(exc), "diagnostics": exc.diagnostics}), file=stdout, end="")
        return EXIT_VIOLATION
    print(emit(report, args.output), file=stdout, end="")
    return code


def console_main() -> int:
    return run()


def main(argv: list[str] | None = None) -> int:
    return run(argv)


if __name__ == "__main__":
    sys.exit(run())
