"""Command-line front-end.

    stwist simulate    --config scenario.json --out DIR
    stwist sweep       --config sweep.json --out DIR
    stwist tune        --config problem.json --out DIR
    stwist table1      [--config table1.json] --out DIR
    stwist check-gains --k1 1 --k2 2 --L 2.5 --T 0.25

Exit codes: 0 success, 1 configuration error, 2 divergence.  Every CSV
starts with ``#`` comment lines recording the run manifest; JSON outputs
carry ``schema_version``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys

from . import __version__
from .analysis import (SWEEP_CSV_HEADER, SWEEP_PARAMS, Scenario, check_finite_time_gains,
                       check_w1_bound_gain, compute_bounds, fit_rows, simulate, sweep)
from .errors import ConfigurationError, StwistError
from .fields import Gains, State, k1_meets
from .integrator import FIELD_KINDS
from .perturbations import PerturbationSpec, mean_rate
from .scenarios import MotorParams, Table1Row, motor_closed_loop, reproduce_table1
from .tuning import TuningProblem, tune_gains, validate_tuning

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2

# default sweep base: under-tuned gains (1.76, 1.08) at L = 2.5, T = 0.25
DEFAULT_SWEEP_BASE = {"L": 2.5, "T": 0.25, "gains": {"k1": 1.76, "k2": 1.08}, "delta": 1e-5}

_SCENARIO_KEYS = {"schema_version", "motor", "L", "T", "gains", "delta", "x0", "t_end",
                  "field_kind", "tol", "min_periods", "max_periods", "dt", "perturbation"}


# -- config helpers ----------------------------------------------------------

def load_json(path):
    if path is None:
        raise ConfigurationError("a --config file is required", "config")
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path!r}: {exc.strerror}", "config") from None
    if not text.strip():
        raise ConfigurationError(f"{path!r} is empty", "config")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"malformed JSON in {path!r}: {exc}", "config") from None
    if not isinstance(data, dict):
        raise ConfigurationError("top level must be a JSON object", "config")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported version {version!r}", "schema_version")
    return data


def _num(data, key, default=None, prefix="", positive=False):
    if key not in data:
        if default is None:
            raise ConfigurationError("missing", prefix + key)
        return default
    v = data[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigurationError(f"expected a finite number, got {v!r}", prefix + key)
    if positive and not v > 0:
        raise ConfigurationError(f"must be positive, got {v!r}", prefix + key)
    return float(v)


def _int(data, key, default):
    v = data.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigurationError(f"expected an integer, got {v!r}", key)
    return v


def scenario_from_dict(data, delta=None, dt=None, prefix=""):
    """Build a Scenario (and optional fixed horizon) from scenario JSON.

    ``gains`` is either physical ``{"k1p", "k2p"}`` (divided by the motor
    inertia) or normalised ``{"k1", "k2"}``.  ``delta`` and ``dt`` override
    the file.
    """
    if not isinstance(data, dict):
        raise ConfigurationError("expected a JSON object", prefix.rstrip(".") or "config")
    unknown = set(data) - _SCENARIO_KEYS
    if unknown:
        raise ConfigurationError("unknown field", prefix + sorted(unknown)[0])
    L = _num(data, "L", prefix=prefix, positive=True)
    T = _num(data, "T", prefix=prefix, positive=True)
    d = delta if delta is not None else _num(data, "delta", 1e-5, prefix, positive=True)
    motor = MotorParams.from_dict(data.get("motor", {}), T)

    gains = data.get("gains")
    if not isinstance(gains, dict):
        raise ConfigurationError("missing or not an object", prefix + "gains")
    if "k1p" in gains or "k2p" in gains:
        k1p = _num(gains, "k1p", prefix=prefix + "gains.", positive=True)
        k2p = _num(gains, "k2p", prefix=prefix + "gains.", positive=True)
        loop = motor_closed_loop(motor, (k1p, k2p), L, d)
        g, spec = loop.gains, loop.perturbation
    else:
        g = Gains(_num(gains, "k1", prefix=prefix + "gains.", positive=True),
                  _num(gains, "k2", prefix=prefix + "gains.", positive=True))
        spec = None
    if "perturbation" in data:
        try:
            spec = PerturbationSpec.from_dict(data["perturbation"])
        except ConfigurationError as exc:
            raise ConfigurationError(str(exc), prefix + "perturbation") from None

    x0 = data.get("x0", [0.0, 0.0])
    if (not isinstance(x0, list) or len(x0) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x0)):
        raise ConfigurationError("expected [x1, x2]", prefix + "x0")
    kind = data.get("field_kind", "regularized")
    if kind not in FIELD_KINDS:
        raise ConfigurationError(f"must be one of {', '.join(FIELD_KINDS)}", prefix + "field_kind")
    step = dt if dt is not None else (
        _num(data, "dt", prefix=prefix, positive=True) if "dt" in data else None)
    sc = Scenario(g, L, T, d, State(*x0), _num(data, "tol", 1e-3, prefix, positive=True),
                  _int(data, "min_periods", 8), _int(data, "max_periods", 200),
                  dt=step, field_kind=kind, perturbation=spec)
    t_end = _num(data, "t_end", prefix=prefix, positive=True) if "t_end" in data else None
    return sc, t_end


def scenario_to_dict(sc):
    out = {"L": sc.L, "T": sc.T, "gains": {"k1": sc.gains.k1, "k2": sc.gains.k2},
           "delta": sc.delta, "x0": list(sc.x0), "field_kind": sc.field_kind}
    if sc.perturbation is not None:
        out["perturbation"] = sc.perturbation.to_dict()
    return out


# -- output helpers ----------------------------------------------------------

def manifest(args, **resolved):
    """Run manifest as ``key: value`` lines; deterministic for a given input."""
    lines = [f"tool: stwist {__version__}", f"command: {args.command}",
             f"config_path: {args.config}"]
    if args.config is not None and os.path.isfile(args.config):
        with open(args.config, "rb") as fh:
            lines.append(f"config_sha256: {hashlib.sha256(fh.read()).hexdigest()}")
    lines.append(f"output_dir: {args.out}")
    lines.append("seed: none (deterministic)")
    for key in sorted(resolved):
        v = resolved[key]
        lines.append(f"{key}: {v!r}" if isinstance(v, float) else f"{key}: {v}")
    return lines


def _manifest_dict(lines):
    return dict(line.split(": ", 1) for line in lines)


def write_json(path, payload):
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    text = json.dumps(payload, indent=2, sort_keys=False, allow_nan=True) + "\n"
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return text


def write_table(path, header, rows, manifest_lines):
    with open(path, "w", newline="\n") as fh:
        for line in manifest_lines:
            fh.write(f"# {line}\n")
        fh.write(header + "\n")
        for cells in rows:
            fh.write(",".join(cells) + "\n")


def _figure(args, fn, *a, **kw):
    if args.no_figures:
        return None
    from . import plotting
    return getattr(plotting, fn)(*a, **kw)


# -- commands ----------------------------------------------------------------

def cmd_simulate(args):
    sc, t_end = scenario_from_dict(load_json(args.config), args.delta, args.dt)
    traj, report = simulate(sc, t_end)
    lines = manifest(args, delta=sc.delta, dt=traj.dt, field_kind=sc.field_kind)
    traj.to_csv(os.path.join(args.out, "trajectory.csv"), lines)
    payload = {"manifest": _manifest_dict(lines), "scenario": scenario_to_dict(sc),
               "dt": traj.dt, "n_samples": len(traj)}
    if sc.spec().periodic:
        payload["bounds"] = _bounds_dict(compute_bounds(sc.gains, sc.L, sc.T, args.n_fraction))
    if traj.divergence is not None:
        div = traj.divergence
        x2 = traj.x2
        half = len(x2) // 2
        slope = None
        if len(x2) - half >= 2:
            slope = (x2[-1] - x2[half]) / ((len(x2) - 1 - half) * traj.dt_sample)
        payload["divergence"] = {"t": div.t, "x1": div.state.x1, "x2": div.state.x2,
                                 "x2_slope": slope, "mean_rate": mean_rate(sc.spec())}
        payload["report"] = None
        write_json(os.path.join(args.out, "report.json"), payload)
        _figure(args, "plot_trajectory", traj, os.path.join(args.out, "trajectory.png"),
                "diverged")
        print(f"diverged at t={div.t:.17g}", file=sys.stderr)
        return EXIT_DIVERGED
    payload["report"] = None if report is None else report.to_dict()
    write_json(os.path.join(args.out, "report.json"), payload)
    _figure(args, "plot_trajectory", traj, os.path.join(args.out, "trajectory.png"))
    if report is not None:
        state = "converged" if report.converged else "not converged"
        print(f"{state}: w1 in [{report.w1_min:.6g}, {report.w1_max:.6g}], "
              f"|w2| <= {report.w2_max_abs:.6g}, residual {report.relative_residual:.3g}")
    return EXIT_OK


def _bounds_dict(b):
    return {"amplitude_bound": b.amplitude_bound, "W1": b.W1, "chatter_bound": b.chatter_bound,
            "n_fraction": b.n_fraction}


def cmd_sweep(args):
    data = load_json(args.config)
    unknown = set(data) - {"schema_version", "base", "vary", "values", "scale_gains",
                           "scale_delta", "workers"}
    if unknown:
        raise ConfigurationError("unknown field", sorted(unknown)[0])
    base, _ = scenario_from_dict(data.get("base", DEFAULT_SWEEP_BASE), args.delta, None,
                                 prefix="base.")
    vary = data.get("vary")
    if vary not in SWEEP_PARAMS:
        raise ConfigurationError(f"must be one of {', '.join(SWEEP_PARAMS)}", "vary")
    values = data.get("values")
    if not isinstance(values, list) or not values:
        raise ConfigurationError("must be a non-empty list", "values")
    for i, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
            raise ConfigurationError(f"expected a positive number, got {v!r}", f"values[{i}]")
    scale_gains = bool(data.get("scale_gains", True))
    scale_delta = bool(data.get("scale_delta", True))
    workers = args.workers if args.workers is not None else _int(data, "workers", 1)

    rows = sweep(base, vary, values, args.n_fraction, scale_gains, scale_delta, workers)
    lines = manifest(args, vary=vary, n_fraction=args.n_fraction, scale_gains=scale_gains,
                     scale_delta=scale_delta, base_delta=base.delta)
    write_table(os.path.join(args.out, "sweep.csv"), SWEEP_CSV_HEADER,
                [r.csv_cells() for r in rows], lines)
    fit = fit_rows(rows, "loglog" if vary == "T" else "linear") if len(rows) > 1 else None
    write_json(os.path.join(args.out, "fit.json"), {
        "manifest": _manifest_dict(lines), "vary": vary, "n_rows": len(rows),
        "n_converged": sum(r.converged for r in rows),
        "fit": None if fit is None else fit.to_dict()})
    _figure(args, "plot_sweep", rows, vary, os.path.join(args.out, "sweep.png"), fit)
    if fit is not None:
        print(f"{fit.kind} fit: slope {fit.slope:.6g}, intercept {fit.intercept:.6g}, "
              f"R^2 {fit.r2:.6f} over {fit.n_points} points")
    return EXIT_OK


def cmd_tune(args):
    data = load_json(args.config)
    if args.n_fraction_given:
        data = {**data, "n_fraction": args.n_fraction}
    problem = TuningProblem.from_dict(data)
    result = tune_gains(problem)
    payload = {"problem": problem.to_dict(), "result": result.to_dict()}
    if data.get("validate") and result.feasible:
        delta = args.delta if args.delta is not None else _num(data, "delta", 1e-5, positive=True)
        sc = Scenario(result.gains, problem.L, problem.T, delta, dt=args.dt)
        v = validate_tuning(result, problem, sc)
        payload["validation"] = {"simulated_w1_max": v.simulated_w1_max,
                                 "simulated_abs_x1": v.simulated_abs_x1,
                                 "within_W1": v.within_W1, "converged": v.converged,
                                 "delta": delta}
    lines = manifest(args)
    payload["manifest"] = _manifest_dict(lines)
    text = write_json(os.path.join(args.out, "tuning.json"), payload)
    print(text, end="")
    return EXIT_OK


def cmd_table1(args):
    data = load_json(args.config) if args.config is not None else {}
    unknown = set(data) - {"schema_version", "rows", "eta", "eps", "tuned", "published", "delta"}
    if unknown:
        raise ConfigurationError("unknown field", sorted(unknown)[0])
    delta = args.delta if args.delta is not None else _num(data, "delta", 1e-5, positive=True)
    rows = data.get("rows")
    if rows is not None and (not isinstance(rows, list)
                             or not all(isinstance(i, int) and 0 <= i < 4 for i in rows)):
        raise ConfigurationError("expected a list of row indices 0..3", "rows")
    table = reproduce_table1(args.n_fraction, delta, bool(data.get("tuned", True)),
                             bool(data.get("published", True)), rows,
                             _num(data, "eta", 0.01, positive=True),
                             _num(data, "eps", 1e-3, positive=True))
    lines = manifest(args, n_fraction=args.n_fraction, delta=delta)
    write_table(os.path.join(args.out, "table1.csv"), ",".join(Table1Row.COLUMNS),
                [r.cells() for r in table], lines)
    _figure(args, "plot_table1", table, os.path.join(args.out, "table1.png"))
    for r in table:
        print(f"T={r.T:g} L={r.L:g}: kbar=({r.kbar1:.3f}, {r.kbar2:.3f}) "
              f"tuned={_fmt(r.k1)},{_fmt(r.k2)} |x1|={_fmt(r.sim_abs_x1)} W1={_fmt(r.W1)} "
              f"published-gains |x1|={_fmt(r.published_sim_abs_x1)}")
    return EXIT_OK


def _fmt(v):
    return "n/a" if v is None else f"{v:.4g}"


def gain_conditions(g, L, T, q_bar=0.0, n=0.5):
    """The five gain conditions and the three bounds as a JSON-ready dict."""
    b = compute_bounds(g, L, T, n)
    q = abs(q_bar)
    return {
        "gains": {"k1": g.k1, "k2": g.k2}, "L": L, "T": T, "q_bar": q_bar,
        "conditions": {
            "finite_time": check_finite_time_gains(g, L),
            "k2_exceeds_mean_rate": g.k2 > q,
            "k1_limit_cycle": k1_meets(g.k1, g.k2 + q),
            "w1_bound_applicable": check_w1_bound_gain(g, L),
            "under_tuned": 0.0 < g.k2 < L,
        },
        "bounds": _bounds_dict(b),
    }


def cmd_check_gains(args):
    data = load_json(args.config) if args.config is not None else {}
    gains = data.get("gains", {})
    if not isinstance(gains, dict):
        raise ConfigurationError("expected an object", "gains")

    def pick(flag, src, key):
        if flag is not None:
            return flag
        return _num(src, key, positive=key != "q_bar") if key != "q_bar" else _num(src, key, 0.0)

    g = Gains(pick(args.k1, gains, "k1"), pick(args.k2, gains, "k2"))
    L = pick(args.L, data, "L")
    T = pick(args.T, data, "T")
    q_bar = pick(args.q_bar, data, "q_bar")
    report = gain_conditions(g, L, T, q_bar, args.n_fraction)
    lines = manifest(args)
    report["manifest"] = _manifest_dict(lines)
    text = write_json(os.path.join(args.out, "check_gains.json"), report)
    if args.json:
        print(text, end="")
    else:
        print(f"gains k1={g.k1:g} k2={g.k2:g}, L={L:g}, T={T:g}, q_bar={q_bar:g}")
        for name, ok in report["conditions"].items():
            print(f"  {name:<22} {'yes' if ok else 'no'}")
        b = report["bounds"]
        print(f"  amplitude bound (k2+L)T^2/8 = {b['amplitude_bound']:.6g}")
        w1 = "not applicable" if b["W1"] is None else f"{b['W1']:.6g}"
        print(f"  W1 (n={b['n_fraction']:g})           = {w1}")
        print(f"  chatter bound (k2+L)T/2     = {b['chatter_bound']:.6g}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "tune": cmd_tune,
            "table1": cmd_table1, "check-gains": cmd_check_gains}


# -- argument parsing --------------------------------------------------------

def _global_flags(parser, suppress):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=default(None), help="JSON configuration file")
    parser.add_argument("--out", default=default("."), help="output directory")
    parser.add_argument("--delta", type=float, default=default(None),
                        help="regularisation width (overrides the config)")
    parser.add_argument("--dt", type=float, default=default(None),
                        help="fixed integration step (default: largest aligned stable step)")
    parser.add_argument("--n-fraction", type=float, default=default(None),
                        help="time fraction n in (0, 1/2] used by W1 (default 1/2)")
    parser.add_argument("--no-figures", action="store_true", default=default(False),
                        help="skip PNG output")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stwist", description="Under-tuned super-twisting loops: limit cycles, "
                                   "amplitude bounds and gain tuning.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub.add_parser("simulate", parents=[common], help="simulate one scenario")
    p = sub.add_parser("sweep", parents=[common], help="parameter sweep with fit summary")
    p.add_argument("--workers", type=int, default=None, help="parallel processes")
    sub.add_parser("tune", parents=[common], help="tune gains to an amplitude target")
    sub.add_parser("table1", parents=[common], help="rebuild the gain/bound table")
    p = sub.add_parser("check-gains", parents=[common], help="gain conditions and bounds")
    for name in ("k1", "k2", "L", "T"):
        p.add_argument(f"--{name}", type=float, default=None)
    p.add_argument("--q-bar", dest="q_bar", type=float, default=None)
    p.add_argument("--json", action="store_true", help="print JSON instead of text")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; 2 is reserved for divergence here
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    args.n_fraction_given = args.n_fraction is not None
    if args.n_fraction is None:
        args.n_fraction = 0.5
    if not hasattr(args, "workers"):
        args.workers = None
    try:
        if not 0.0 < args.n_fraction <= 0.5:
            raise ConfigurationError("must lie in (0, 1/2]", "n-fraction")
        for name in ("delta", "dt"):
            v = getattr(args, name)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise ConfigurationError("must be positive", name)
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StwistError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
