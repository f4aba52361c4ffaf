"""Command line: ``quarterplane <subcommand> [options]``.

Structured results are JSON, grids and sweeps are CSV.  With ``--out DIR`` the
artifacts are written there and an index of the files is printed; otherwise
the main artifact goes to stdout.  Failures print an error JSON and exit with
2 (bad configuration), 3 (solve failure) or 4 (``compare --assert`` beyond
tolerance).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys

import numpy as np

from .bvp import BVPError
from .conformal import ConformalError, solve_theodorsen
from .kernel import KernelError, contour_L, contour_M, contours_S1_S2, kernel_coeffs
from .metrics import MetricsError, compute_metrics, monotone_flags, report, sweep
from .model import ModelError, load_model, spec_to_dict, validate_model
from .oracle import OracleError, compare, simulate, truncated_stationary
from .solver import SolveError, SolverConfig, solve_model
from .stability import StabilityError, classify_stability, ra_stability_region
from .templates import build_template

log = logging.getLogger("quarterplane")

EXIT_CONFIG, EXIT_SOLVE, EXIT_ASSERT = 2, 3, 4


class ConfigError(ValueError):
    pass


class AssertionFailed(RuntimeError):
    def __init__(self, msg, details):
        super().__init__(msg)
        self.details = details


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# ---------------------------------------------------------------- parsing helpers

def _pair(text, name):
    try:
        a, b = (int(s) for s in text.split(","))
    except ValueError:
        raise ConfigError(f"{name} expects two integers 'A,B', got {text!r}") from None
    if a < 0 or b < 0:
        raise ConfigError(f"{name} must be nonnegative")
    return a, b


def _trunc(text):
    if text is None or text == "auto":
        return None
    return _pair(text, "--trunc")


def _linspace(text, name):
    try:
        lo, hi, n = text.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except ValueError:
        raise ConfigError(f"{name} expects 'lo:hi:count', got {text!r}") from None


def _json_arg(text, name):
    if text is None:
        return {}
    if os.path.exists(text):
        with open(text) as fh:
            text = fh.read()
    try:
        out = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{name} is not valid JSON: {exc}") from None
    if not isinstance(out, dict):
        raise ConfigError(f"{name} must be a JSON object")
    return out


def _load_spec(args):
    if args.model and args.template:
        raise ConfigError("give either --model or --template, not both")
    if args.model:
        return load_model(args.model)
    if args.template:
        return build_template(args.template, _json_arg(args.params, "--params"))
    raise ConfigError("a model is required (--model FILE or --template NAME)")


def _config(args):
    if args.j <= 0 or args.j % 2:
        raise ConfigError("--j must be a positive even integer")
    if args.tol <= 0:
        raise ConfigError("--tol must be positive")
    return SolverConfig(J=args.j, tol=args.tol)


def _window(args, spec):
    return _pair(args.window, "--window") if args.window else (spec.N1, spec.N2)


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _dump_json(obj):
    return json.dumps(_to_jsonable(obj), indent=2, sort_keys=False) + "\n"


def _csv_text(cols, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def _grid_csv(grid):
    rows = [(i, j, repr(float(grid[i, j]))) for i in range(grid.shape[0]) for j in range(grid.shape[1])]
    return _csv_text(["n1", "n2", "probability"], rows)


class Output:
    """Collects named artifacts; the first one is the main artifact."""

    def __init__(self, out_dir, stream):
        self.dir = out_dir
        self.stream = stream
        self.items = []

    def add(self, name, text):
        self.items.append((name, text))

    def flush(self):
        if not self.items:
            return
        if self.dir is None:
            self.stream.write(self.items[0][1])
            return
        os.makedirs(self.dir, exist_ok=True)
        written = []
        for name, text in self.items:
            path = os.path.join(self.dir, name)
            with open(path, "w") as fh:
                fh.write(text)
            written.append(path)
        self.stream.write(_dump_json({"written": written}))


# ---------------------------------------------------------------- subcommands

def cmd_validate(args, out):
    spec = _load_spec(args)
    rep = validate_model(spec)
    doc = {"ok": rep.ok, "max_row_residual": rep.max_row_residual, "failures": rep.failures(),
           "n1": spec.N1, "n2": spec.N2, "mode": spec.mode}
    out.add("validation.json", _dump_json(doc))
    if args.emit_model:
        out.add("model.json", _dump_json(spec_to_dict(spec)))
    if not rep.ok:
        raise ModelError("invalid model", doc["failures"])


def cmd_stability(args, out):
    spec = _load_spec(args)
    out.add("stability.json", _dump_json(classify_stability(spec).as_dict()))


def cmd_region(args, out):
    params = _json_arg(args.params, "--params")
    c1 = _linspace(args.caps1, "--caps1")
    c2 = _linspace(args.caps2, "--caps2")

    def build(a, b):
        return build_template(args.template or "ra-region", dict(params, cap1=float(a), cap2=float(b)))

    scan = ra_stability_region(build, c1, c2, margin=args.margin)
    cols = ["lambda1_cap", "lambda2_cap", "h1", "h2", "class", "near_boundary"]
    rows = [[r[c] for c in cols] for r in scan.rows()]
    out.add("region.csv", _csv_text(cols, rows))
    out.add("convexity.json", _dump_json(scan.convexity))


def cmd_contours(args, out):
    spec = _load_spec(args)
    kp = kernel_coeffs(spec)
    M = contour_M(kp, args.points)
    L = contour_L(kp, args.points)
    s1, s2, _ = contours_S1_S2(kp, args.points)
    circle = np.exp(2j * np.pi * np.arange(args.points) / args.points)
    rows = []
    for name, pts in (("S1", s1), ("S2", s2), ("M", M.points()), ("L", L.points()), ("circle", circle)):
        rows += [(name, k, repr(float(z.real)), repr(float(z.imag))) for k, z in enumerate(pts)]
    out.add("contours.csv", _csv_text(["curve", "k", "re", "im"], rows))
    if args.map:
        cfg = _config(args)
        for name, ct in (("M", M), ("L", L)):
            cm = solve_theodorsen(ct, J=cfg.J, tol=cfg.tol)
            rows = [(repr(float(a)), repr(float(b)), repr(float(c))) for a, b, c in zip(cm.phi, cm.psi, cm.rho)]
            out.add(f"map_{name}.csv", _csv_text(["phi", "psi", "rho"], rows))


def _metrics_dict(rep):
    return {"EQ1": rep.EQ1, "EQ2": rep.EQ2, "EQ_total": rep.EQ_total, "p_empty": rep.p_empty,
            "shares": rep.shares, "engine": rep.engine, "fallback": rep.fallback}


def _bvp_dump(sol):
    sides = {}
    for name, side in (("g0", sol.g_side), ("h0", sol.h_side)):
        prob = side.sol.problem
        cm = prob.cmap
        sides[name] = {
            "J": int(cm.J), "chi": int(side.chi), "kappa": int(prob.kappa),
            "poles": [[complex(p).real, complex(p).imag] for p in prob.poles],
            "factors": [{"zeta": [f.zeta.real, f.zeta.imag], "w": [f.w.real, f.w.imag], "sigma": f.sigma}
                        for f in prob.factors],
            "theodorsen_sweeps": int(cm.sweeps), "phase_step": prob.phase_step,
            "spectral_tail": side.sol.cache.get("tail"),
            "samples": {"phi": cm.phi, "x_re": prob.x.real, "x_im": prob.x.imag,
                        "U_re": prob.U.real, "U_im": prob.U.imag, "arg": prob.alpha},
        }
    return {"sides": sides, "residuals": sol.residuals}


def cmd_solve(args, out):
    spec = _load_spec(args)
    cfg = _config(args)
    sol = solve_model(spec, cfg)
    W = _window(args, spec)
    probs = sol.probabilities(*W)
    try:
        metrics = _metrics_dict(report(sol, "bvp"))
    except MetricsError as exc:
        metrics = {"error": str(exc)}
    res = {k: v for k, v in sol.residuals.items() if k != "per_equation"}
    doc = {
        "engine": "bvp",
        "chi": int(sol.g_side.chi),
        "chi_sides": {"g0": int(sol.g_side.chi), "h0": int(sol.h_side.chi)},
        "n1": spec.N1, "n2": spec.N2,
        "corner": sol.corner,
        "residuals": res,
        "metrics": metrics,
        "window": list(W),
        "probabilities": probs,
        "timings": sol.timings,
    }
    out.add("solution.json", _dump_json(doc))
    out.add("window.csv", _grid_csv(probs))
    if args.dump_bvp:
        out.add("bvp.json", _dump_json(_bvp_dump(sol)))


def cmd_truncate(args, out):
    spec = _load_spec(args)
    T = _trunc(args.trunc)
    ts = truncated_stationary(spec, *(T or (None, None)), tail_tol=args.tail_tol)
    W = _window(args, spec)
    doc = {"engine": "truncation", "T1": ts.T1, "T2": ts.T2, "tail": ts.tail, "residual": ts.residual,
           "history": ts.history, "corner": ts.window(spec.N1, spec.N2),
           "metrics": _metrics_dict(report(ts, "truncation")), "window": list(W),
           "probabilities": ts.window(*W)}
    out.add("truncation.json", _dump_json(doc))
    out.add("grid.csv", _grid_csv(ts.pi))


def cmd_simulate(args, out):
    spec = _load_spec(args)
    if args.horizon <= 0:
        raise ConfigError("--horizon must be positive")
    W = _window(args, spec) if args.window else (40, 40)
    res = simulate(spec, args.horizon, args.seed, window=W)
    doc = {"engine": "simulation", "horizon": res.horizon, "seed": res.seed, "burn_in": res.burn_in,
           "slope": list(res.slope), "growing": res.growing, "final": list(res.final),
           "mean_queue_window": list(res.mean_queue()), "overflow": res.overflow, "window": list(W),
           "probabilities": res.freq}
    out.add("simulation.json", _dump_json(doc))
    out.add("frequencies.csv", _grid_csv(res.freq))


def cmd_metrics(args, out):
    spec = _load_spec(args)
    if args.engine == "truncation":
        ts = truncated_stationary(spec, *(_trunc(args.trunc) or (None, None)))
        rep = report(ts, "truncation", diagnostics={"tail": ts.tail})
    else:
        rep = compute_metrics(spec, _config(args), fallback=args.engine == "auto", trunc=_trunc(args.trunc))
    doc = _metrics_dict(rep)
    doc["diagnostics"] = rep.diagnostics
    out.add("metrics.json", _dump_json(doc))


def cmd_sweep(args, out):
    if not args.template:
        raise ConfigError("sweep needs --template")
    grid = _json_arg(args.grid, "--grid")
    if not grid or not all(isinstance(v, list) and v for v in grid.values()):
        raise ConfigError("--grid maps parameter names to nonempty lists")
    fixed = _json_arg(args.params, "--params")
    for k, v in fixed.items():
        grid.setdefault(k, [v])
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    cols, rows = sweep(args.template, grid, cfg=_config(args), jobs=args.jobs, fallback=not args.no_fallback)
    out.add("sweep.csv", _csv_text(cols, [[r[c] for c in cols] for r in rows]))
    flags = {}
    for spec_ in args.monotone or []:
        try:
            key, value = spec_.split(":")
        except ValueError:
            raise ConfigError(f"--monotone expects KEY:METRIC, got {spec_!r}") from None
        by = [k for k in grid if k != key]
        ok_rows = [r for r in rows if r[value] != ""]
        fl = monotone_flags(ok_rows, key, by, value)
        flags[spec_] = {"all": all(fl.values()),
                        "groups": [{"at": dict(zip(by, g)), "nondecreasing": v} for g, v in fl.items()]}
    if flags:
        out.add("monotone.json", _dump_json(flags))


def _read_solution(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
        return np.asarray(doc["probabilities"], dtype=float)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot read probabilities from {path}: {exc}") from None


def cmd_compare(args, out):
    a, b = (_read_solution(p) for p in args.files)
    W = _pair(args.window, "--window") if args.window else None
    rep = compare(a, b, W)
    doc = rep.as_dict()
    doc["window"] = list(W) if W else [min(a.shape[0], b.shape[0]) - 1, min(a.shape[1], b.shape[1]) - 1]
    if args.assert_:
        try:
            key, val = args.assert_.split("=")
            tol = float(val)
            assert key == "tol"
        except (ValueError, AssertionError):
            raise ConfigError(f"--assert expects tol=VALUE, got {args.assert_!r}") from None
        doc["tol"] = tol
        doc["pass"] = rep.sup <= tol
    out.add("compare.json", _dump_json(doc))
    if args.assert_ and not doc["pass"]:
        # stdout carries only the error document, which includes the report
        if out.dir is not None:
            out.flush()
        out.items = []
        raise AssertionFailed(f"sup-norm difference {rep.sup:.3e} exceeds {doc['tol']:.1e}", doc)


COMMANDS = {
    "validate": (cmd_validate, "check a model file: row sums, signs, support, boundary"),
    "stability": (cmd_stability, "drift-based ergodicity classification (JSON)"),
    "region": (cmd_region, "random-access stability region over a grid of arrival caps (CSV)"),
    "contours": (cmd_contours, "kernel curves S1, S2, M, L and the unit circle (CSV)"),
    "solve": (cmd_solve, "analytic solve: corner probabilities, index, residuals, metrics (JSON)"),
    "truncate": (cmd_truncate, "stationary law of the truncated chain (JSON + CSV grid)"),
    "simulate": (cmd_simulate, "Monte Carlo trajectory with growth detection (JSON + CSV)"),
    "metrics": (cmd_metrics, "expected queue lengths, empty probability, region shares (JSON)"),
    "sweep": (cmd_sweep, "metrics over a parameter grid of a model template (CSV)"),
    "compare": (cmd_compare, "distances between two probability windows (JSON)"),
}


def _common(p):
    g = p.add_argument_group("common options")
    g.add_argument("--model", metavar="PATH", help="model JSON file")
    g.add_argument("--template", metavar="NAME",
                   help="named model family (ra-example, ra-region, ra-geometric, ldgps, policy)")
    g.add_argument("--params", metavar="JSON", help="template parameters as a JSON object or file")
    g.add_argument("--j", type=int, default=1000, metavar="INT", help="boundary nodes (default 1000)")
    g.add_argument("--tol", type=float, default=1e-6, metavar="FLOAT",
                   help="conformal-map stopping tolerance (default 1e-6)")
    g.add_argument("--trunc", default="auto", metavar="T1,T2|auto", help="truncation levels (default auto)")
    g.add_argument("--horizon", type=int, default=10 ** 6, metavar="INT", help="simulated slots (default 1e6)")
    g.add_argument("--seed", type=int, default=0, metavar="INT", help="random seed (default 0)")
    g.add_argument("--jobs", type=int, default=1, metavar="INT", help="worker processes (default 1)")
    g.add_argument("--out", metavar="DIR", help="write artifacts to DIR instead of stdout")
    g.add_argument("--window", metavar="W1,W2", help="probability window [0,W1]x[0,W2]")


def build_parser():
    p = _Parser(prog="quarterplane",
                description="Stationary analysis of partially homogeneous random walks in the quarter plane.",
                epilog="Exit codes: 0 ok, 2 bad configuration, 3 solve failure, 4 compare --assert failed. "
                       "Log level from the QP_LOG environment variable.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, (_, hlp) in COMMANDS.items():
        sp = sub.add_parser(name, help=hlp, description=hlp)
        if name == "validate":
            sp.add_argument("--emit-model", action="store_true", help="also write the expanded table model")
        elif name == "region":
            sp.add_argument("--caps1", default="0.01:0.4:20", metavar="LO:HI:N", help="first-queue arrival caps")
            sp.add_argument("--caps2", default="0.01:0.3:20", metavar="LO:HI:N", help="second-queue arrival caps")
            sp.add_argument("--margin", type=float, default=0.02, help="boundary ring radius (default 0.02)")
        elif name == "contours":
            sp.add_argument("--points", type=int, default=720, help="points per curve (default 720)")
            sp.add_argument("--map", action="store_true", help="also emit the conformal boundary correspondence")
        elif name == "solve":
            sp.add_argument("--dump-bvp", action="store_true",
                            help="emit boundary samples, index, poles and residuals")
        elif name == "truncate":
            sp.add_argument("--tail-tol", type=float, default=1e-10, help="target tail mass for auto levels")
        elif name == "metrics":
            sp.add_argument("--engine", choices=("auto", "bvp", "truncation"), default="auto",
                            help="auto falls back to truncation when the analytic solve does not apply")
        elif name == "sweep":
            sp.add_argument("--grid", metavar="JSON", help="parameter name -> list of values")
            sp.add_argument("--monotone", action="append", metavar="KEY:METRIC",
                            help="report whether METRIC is nondecreasing in KEY (repeatable)")
            sp.add_argument("--no-fallback", action="store_true", help="record failures instead of truncating")
        elif name == "compare":
            sp.add_argument("files", nargs=2, metavar="SOLUTION", help="JSON outputs of solve/truncate/simulate")
            sp.add_argument("--assert", dest="assert_", metavar="tol=FLOAT",
                            help="exit 4 when the sup-norm difference exceeds FLOAT")
        _common(sp)
    return p


def _error(stream, code, exc, details=None):
    msg = exc.args[0] if len(exc.args) > 1 else str(exc)
    doc = {"error": type(exc).__name__, "message": str(msg), "exit_code": code}
    if details:
        doc["details"] = details
    stream.write(_dump_json(doc))
    return code


def main(argv=None, stdout=None):
    stdout = stdout or sys.stdout
    level = os.environ.get("QP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise ConfigError("a subcommand is required")
    except ConfigError as exc:
        return _error(stdout, EXIT_CONFIG, exc)
    out = Output(args.out, stdout)
    fn = COMMANDS[args.command][0]
    try:
        fn(args, out)
    except AssertionFailed as exc:
        return _error(stdout, EXIT_ASSERT, exc, exc.details)
    except ModelError as exc:
        details = exc.args[1] if len(exc.args) > 1 else None
        return _error(stdout, EXIT_CONFIG, exc, details)
    except ConfigError as exc:
        return _error(stdout, EXIT_CONFIG, exc)
    except (SolveError, KernelError, ConformalError, BVPError, OracleError, MetricsError,
            StabilityError) as exc:
        return _error(stdout, EXIT_SOLVE, exc, getattr(exc, "details", None))
    out.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
