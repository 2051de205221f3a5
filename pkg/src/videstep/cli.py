"""Command-line interface: solve, error analysis, and experiment reproduction.

Commands map onto the library surface: solve runs a trajectory, errors
emits global errors, bound fits and evaluates the global-error envelope,
order and consistency run the stepsize studies, local emits recovered
next to directly measured local errors, and figure reproduces one of the
five canned experiments.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical
failure (no convergence, or divergence without --allow-divergence).

A JSON config file (--config) supplies any subset of the flags; explicit
flags override file values, unknown keys are rejected. The metadata
sidecar emitted next to every CSV contains a "config" mapping that
reproduces the run, so `videstep --config out.meta.json` reruns it.
Relative output paths land in $VIDESTEP_OUT_DIR when that is set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .core import Method, make_mesh
from .error_analysis import (
    auto_reference,
    direct_local_errors,
    error_bound,
    fit_bound,
    global_errors,
    recover_local_errors,
)
from .errors import (
    DegenerateDenominator,
    NoConvergence,
    SingularDenominator,
    SingularJacobian,
    StepEvaluationError,
    VidestepError,
    ZeroError,
)
from .experiments import (
    DIVERGENCE_THRESHOLD,
    ResultTable,
    figure_spec,
    run_consistency_study,
    run_experiment,
    run_order_study,
)
from .steppers import ImplicitSolveConfig, SolveStrategy, integrate
from .test_problems import PROBLEM_IDS, TestEquationParams, builtin_problem

COMMANDS = ("solve", "errors", "bound", "order", "local", "figure", "consistency")

# Errors of arithmetic origin exit 3; everything else about how the tool
# was invoked exits 2.
_NUMERICAL_ERRORS = (NoConvergence, SingularJacobian, SingularDenominator,
                     DegenerateDenominator, ZeroError, StepEvaluationError)

_DEFAULTS = {
    "problem": "test-equation",
    "x0": 0.0,
    "method": "explicit",
    "strategy": "newton",
    "rel_tol": 1e-12,
    "abs_tol": 1e-14,
    "max_iterations": 50,
    "format": "csv",
    "allow_divergence": False,
}

# Keys each command accepts in a config file (strict parsing).
_RUN_KEYS = {"problem", "lambda", "gamma", "y0", "x0", "xf", "h", "method",
             "strategy", "rel_tol", "abs_tol", "max_iterations", "out",
             "format", "allow_divergence"}
_COMMAND_KEYS = {
    "solve": _RUN_KEYS,
    "errors": _RUN_KEYS,
    "bound": _RUN_KEYS,
    "local": _RUN_KEYS,
    "order": (_RUN_KEYS - {"xf", "h", "allow_divergence"}) | {"x_d", "h_list"},
    "consistency": (_RUN_KEYS - {"h", "allow_divergence"}) | {"h_list"},
    "figure": (_RUN_KEYS - {"problem", "y0"}) | {"id"},
}


class UsageError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="videstep",
        description="Euler-Trapezium solvers and error analysis for "
                    "Volterra integro-differential equations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, mesh_end=True, step=True, divergence=True):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--problem", choices=PROBLEM_IDS)
        p.add_argument("--lambda", dest="lam", type=float,
                       help="test-equation coefficient of (y - 1)")
        p.add_argument("--gamma", type=float,
                       help="test-equation kernel coefficient")
        p.add_argument("--y0", type=float,
                       help="initial value (manufactured problems only)")
        p.add_argument("--x0", type=float)
        if mesh_end:
            p.add_argument("--xf", type=float)
        if step:
            p.add_argument("--h", type=float)
        p.add_argument("--method", choices=["explicit", "implicit"])
        p.add_argument("--strategy", choices=["newton", "fixed-point"])
        p.add_argument("--rel-tol", dest="rel_tol", type=float)
        p.add_argument("--abs-tol", dest="abs_tol", type=float)
        p.add_argument("--max-iterations", dest="max_iterations", type=int)
        p.add_argument("--out")
        p.add_argument("--format", choices=["csv", "json"])
        if divergence:
            p.add_argument("--allow-divergence", action="store_true",
                           default=None)

    for name, doc in [
        ("solve", "integrate and emit the trajectory"),
        ("errors", "emit per-node global errors"),
        ("bound", "fit the growth rate and emit the error bound"),
        ("local", "emit recovered and directly measured local errors"),
    ]:
        add_common(sub.add_parser(name, help=doc))

    p = sub.add_parser("order", help="global-error order study over a stepsize ladder")
    add_common(p, mesh_end=False, step=False, divergence=False)
    p.add_argument("--x-d", dest="x_d", type=float,
                   help="node at which errors are compared")
    p.add_argument("--h-list", dest="h_list",
                   help="comma-separated stepsizes, e.g. 0.02,0.01,0.005")

    p = sub.add_parser("consistency", help="local-error order study over a stepsize ladder")
    add_common(p, step=False, divergence=False)
    p.add_argument("--h-list", dest="h_list",
                   help="comma-separated stepsizes")

    p = sub.add_parser("figure", help="reproduce one canned experiment (1-5)")
    add_common(p)
    p.add_argument("--id", dest="id", type=int, choices=[1, 2, 3, 4, 5])
    return parser


def _load_config(path: str, command: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    # A metadata sidecar carries its reproduction config under "config".
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    allowed = _COMMAND_KEYS[command] | {"command"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
    return data


def _resolve(args: argparse.Namespace, command: str) -> dict:
    """Merge flag values over config-file values over defaults.

    Keys the user actually set (by flag or config file, not by default)
    are collected under the "_explicit" entry; the figure command needs
    the distinction because its per-figure defaults differ from the
    global ones.
    """
    cfg = _load_config(args.config, command) if args.config else {}
    opts = {}
    explicit = set()
    for key in _COMMAND_KEYS[command]:
        attr = "lam" if key == "lambda" else key
        flag = getattr(args, attr, None)
        if flag is not None:
            opts[attr] = flag
            explicit.add(attr)
        elif key in cfg and cfg[key] is not None:
            opts[attr] = cfg[key]
            explicit.add(attr)
        elif key in _DEFAULTS:
            opts[attr] = _DEFAULTS[key]
        else:
            opts[attr] = None
    if isinstance(opts.get("h_list"), str):
        try:
            opts["h_list"] = [float(tok) for tok in opts["h_list"].split(",") if tok]
        except ValueError:
            raise UsageError(f"cannot parse h-list {opts['h_list']!r}")
    opts["_explicit"] = explicit
    return opts


def _require(opts: dict, *keys: str) -> None:
    missing = [k for k in keys if opts.get(k) is None]
    if missing:
        flags = ["--" + ("lambda" if k == "lam" else k).replace("_", "-")
                 for k in missing]
        raise UsageError("missing required option(s): " + ", ".join(flags))


def _problem_from(opts: dict):
    pid = opts["problem"]
    if pid == "test-equation":
        if opts.get("y0") is not None:
            raise UsageError("--y0 does not apply to test-equation (y0 = 2 by definition)")
        _require(opts, "lam", "gamma")
        params = TestEquationParams(lam=opts["lam"], gamma=opts["gamma"])
        return builtin_problem(pid, params), params
    if opts.get("lam") is not None or opts.get("gamma") is not None:
        raise UsageError(f"--lambda/--gamma do not apply to {pid}")
    y0 = opts["y0"] if opts.get("y0") is not None else 1.0
    return builtin_problem(pid, y0=y0), None


def _solve_config_from(opts: dict) -> ImplicitSolveConfig:
    return ImplicitSolveConfig(
        rel_tol=opts["rel_tol"],
        abs_tol=opts["abs_tol"],
        max_iterations=opts["max_iterations"],
        strategy=SolveStrategy(opts["strategy"]),
    )


def _out_path(opts: dict, default_name: str) -> Path:
    out = Path(opts["out"]) if opts.get("out") else Path(default_name)
    base = os.environ.get("VIDESTEP_OUT_DIR")
    if base and not out.is_absolute():
        out = Path(base) / out
        out.parent.mkdir(parents=True, exist_ok=True)
    return out


def _config_mapping(command: str, opts: dict) -> dict:
    """Reproduction config recorded in the metadata sidecar."""
    out = {"command": command}
    for key in sorted(_COMMAND_KEYS[command]):
        attr = "lam" if key == "lambda" else key
        value = opts.get(attr)
        if value is None or key in ("out", "allow_divergence"):
            continue
        if key == "y0" and opts.get("problem") == "test-equation":
            continue
        out[key] = value
    return out


def _emit(table: ResultTable, out: Path, fmt: str) -> None:
    for path in table.write(out, fmt):
        print(path)


def _run_command(command: str, opts: dict) -> int:
    """Shared pipeline for solve/errors/bound/local."""
    _require(opts, "xf", "h")
    problem, _ = _problem_from(opts)
    mesh = make_mesh(opts["x0"], opts["xf"], opts["h"])
    method = Method(opts["method"])
    cfg = _solve_config_from(opts)
    started = time.perf_counter()
    trajectory = integrate(problem, mesh, method, cfg)
    nodes = mesh.nodes()[: trajectory.w.size]
    index = np.arange(trajectory.w.size)
    diverged = (trajectory.overflow_at is not None
                or float(np.max(np.abs(trajectory.w))) > DIVERGENCE_THRESHOLD)
    metadata = {
        "command": command,
        "problem": opts["problem"],
        "method": method.value,
        "h": mesh.h,
        "x0": mesh.x0,
        "xf": mesh.xf,
        "overflow_at": trajectory.overflow_at,
        "diverged": diverged,
        "config": _config_mapping(command, opts),
    }

    if command == "solve":
        columns = {"i": index, "x": nodes, "w": trajectory.w}
    else:
        reference = None
        if problem.exact is None:
            reference = auto_reference(problem, trajectory, cfg)
        deltas = global_errors(trajectory, problem, reference)
        metadata["source"] = ("against-exact" if reference is None
                              else "against-reference-run")
        metadata["max_abs_delta"] = float(np.max(np.abs(deltas)))
        if command == "errors":
            columns = {"i": index, "x": nodes, "w": trajectory.w,
                       "y": trajectory.w - deltas, "delta": deltas}
        elif command == "bound":
            model, curve = fit_bound(problem, trajectory, deltas)
            bound = error_bound(model, mesh)[: trajectory.w.size]
            metadata.update({"L": model.L, "sign_case": model.sign_case.value,
                             "c_tilde_max": float(np.nanmax(curve)),
                             "c_tilde_amplitude": model.C_tilde})
            columns = {"i": index, "x": nodes, "delta_abs": np.abs(deltas),
                       "c_curve": curve, "bound": bound}
        else:  # local
            recovered = recover_local_errors(deltas, problem, trajectory)
            direct = direct_local_errors(problem, mesh, method, cfg)[: trajectory.w.size]
            columns = {"i": index, "x": nodes,
                       "epsilon_recovered": recovered, "epsilon_direct": direct}

    metadata["runtime_s"] = time.perf_counter() - started
    table = ResultTable(columns=columns, metadata=metadata)
    _emit(table, _out_path(opts, f"{command}.csv"), opts["format"])
    if diverged and not opts.get("allow_divergence"):
        print("run diverged; pass --allow-divergence to accept", file=sys.stderr)
        return 3
    return 0


def _cmd_order(opts: dict) -> int:
    _require(opts, "x_d", "h_list")
    problem_id = opts["problem"]
    params = None
    if problem_id == "test-equation":
        _require(opts, "lam", "gamma")
        params = TestEquationParams(lam=opts["lam"], gamma=opts["gamma"])
    elif opts.get("lam") is not None or opts.get("gamma") is not None:
        raise UsageError(f"--lambda/--gamma do not apply to {problem_id}")
    table = run_order_study(
        problem_id, opts["x_d"], opts["h_list"], Method(opts["method"]),
        params=params, y0=opts["y0"] if opts.get("y0") is not None else 1.0,
        cfg=_solve_config_from(opts), x0=opts["x0"],
    )
    table.metadata["config"] = _config_mapping("order", opts)
    _emit(table, _out_path(opts, "order.csv"), opts["format"])
    return 0


def _cmd_consistency(opts: dict) -> int:
    _require(opts, "xf", "h_list")
    problem_id = opts["problem"]
    params = None
    if problem_id == "test-equation":
        _require(opts, "lam", "gamma")
        params = TestEquationParams(lam=opts["lam"], gamma=opts["gamma"])
    elif opts.get("lam") is not None or opts.get("gamma") is not None:
        raise UsageError(f"--lambda/--gamma do not apply to {problem_id}")
    table = run_consistency_study(
        problem_id, opts["h_list"], Method(opts["method"]),
        params=params, y0=opts["y0"] if opts.get("y0") is not None else 1.0,
        cfg=_solve_config_from(opts), x0=opts["x0"], xf=opts["xf"],
    )
    table.metadata["config"] = _config_mapping("consistency", opts)
    _emit(table, _out_path(opts, "consistency.csv"), opts["format"])
    return 0


def _cmd_figure(opts: dict) -> int:
    _require(opts, "id")
    overrides = {key: opts[key]
                 for key in ("lam", "gamma", "x0", "xf", "h", "method", "strategy",
                             "rel_tol", "abs_tol", "max_iterations")
                 if key in opts["_explicit"]}
    spec = figure_spec(opts["id"], overrides)
    table = run_experiment(spec)
    _emit(table, _out_path(opts, f"fig{opts['id']}.csv"), opts["format"])
    if table.metadata.get("diverged") and not opts.get("allow_divergence"):
        print("run diverged; pass --allow-divergence to accept", file=sys.stderr)
        return 3
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    # Bare `videstep --config file` takes its command from the file.
    if argv and not any(tok in COMMANDS for tok in argv):
        if "--config" in argv:
            try:
                path = argv[argv.index("--config") + 1]
            except IndexError:
                print("--config needs a file path", file=sys.stderr)
                return 2
            try:
                with open(path) as fh:
                    data = json.load(fh)
                if isinstance(data, dict) and isinstance(data.get("config"), dict):
                    data = data["config"]
                command = data.get("command") if isinstance(data, dict) else None
            except (OSError, json.JSONDecodeError) as exc:
                print(f"cannot read config file {path}: {exc}", file=sys.stderr)
                return 2
            if command not in COMMANDS:
                print(f"config file {path} names no valid command", file=sys.stderr)
                return 2
            argv.insert(0, command)

    parser = _build_parser()
    args = parser.parse_args(argv)
    command = args.command
    try:
        opts = _resolve(args, command)
        if command in ("solve", "errors", "bound", "local"):
            return _run_command(command, opts)
        if command == "order":
            return _cmd_order(opts)
        if command == "consistency":
            return _cmd_consistency(opts)
        return _cmd_figure(opts)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"run `videstep {command} --help` for options", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        step = getattr(exc, "step_index", None)
        where = f" at step {step}" if step is not None else ""
        print(f"numerical failure{where}: {exc}", file=sys.stderr)
        return 3
    except VidestepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
