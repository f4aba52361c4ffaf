"""Performance measures from an analytic or a truncated solution, and
parameter sweeps written as CSV."""
from __future__ import annotations

import csv
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .affine import evaluate
from .conformal import ConformalError, eta_and_derivative
from .kernel import KernelError
from .oracle import OracleError, TruncatedSolution, truncated_stationary
from .solver import SolveError, SolverConfig, StationarySolution, solve_model

log = logging.getLogger(__name__)


class MetricsError(RuntimeError):
    pass


@dataclass
class MetricsReport:
    EQ1: float
    EQ2: float
    EQ_total: float
    p_empty: float
    shares: dict
    engine: str
    fallback: bool = False
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)


def boundary_derivative_at_one(sol: StationarySolution, axis=0):
    """(value, derivative) of g0 (axis 0) or h0 (axis 1) at 1 through the
    conformal map: d/dx f(gamma(x)) = f'(eta) gamma'(1)."""
    side = sol.g_side if axis == 0 else sol.h_side
    rh = side.sol
    eta, dg = eta_and_derivative(rh.problem.cmap)
    z = np.array([eta + 0j])
    T = side.lift(rh.T(z)[0])
    dT = side.lift(rh.T_deriv(z)[0])
    if side.ext_col is not None:
        T[side.free] = rh.T_free(z)[0]
        dT[side.free] = rh.T_free_deriv(z)[0]
    poles = rh.problem.poles
    pf = np.prod([1.0 - xi for xi in poles]) if poles else 1.0
    dpf = sum(np.prod([1.0 - xj for j, xj in enumerate(poles) if j != i]) for i in range(len(poles)))
    val = T / pf
    der = (dT * dg * pf - T * dpf) / pf ** 2
    return complex(evaluate(val, sol.u)), complex(evaluate(der, sol.u))


def expected_queue_lengths(solution):
    """(E Q1, E Q2).

    For the analytic solution the first moment splits over the regions:
    sum_{S_a} n1 pi + sum_{n2<N2} [N1 g_{n2}(1) + g_{n2}'(1)] + sum_{n1<N1} n1 h_{n1}(1)
    + N1 g(1,1) + d/dx g(x,1)|_{x=1}, and symmetrically for Q2.
    """
    if isinstance(solution, TruncatedSolution):
        return solution.moments()
    sol: StationarySolution = solution
    spec = sol.spec
    N1, N2 = spec.N1, spec.N2
    ex, ey = sol.g_side.kp.drifts
    if ex >= 0 or ey >= 0:
        raise MetricsError("moment formula needs negative corner drifts")
    corner = sol.corner
    gc = sol.column_at_one("g", 1)  # (2, N2+1): values and derivatives at 1
    hc = sol.column_at_one("h", 1)
    gx = sol.g_at_one(1, axis=0)
    gy = sol.g_at_one(1, axis=1)
    n1 = np.arange(N1)[:, None]
    n2 = np.arange(N2)[None, :]
    eq1 = (n1 * corner[:N1, :N2]).sum() + (N1 * gc[0, :N2] + gc[1, :N2]).sum() + \
        (np.arange(N1) * hc[0, :N1]).sum() + N1 * gx[0] + gx[1]
    eq2 = (n2 * corner[:N1, :N2]).sum() + (N2 * hc[0, :N1] + hc[1, :N1]).sum() + \
        (np.arange(N2) * gc[0, :N2]).sum() + N2 * gy[0] + gy[1]
    return float(eq1.real), float(eq2.real)


def empty_probability(solution):
    if isinstance(solution, TruncatedSolution):
        return float(solution.pi[0, 0])
    return float(solution.corner[0, 0])


def region_shares(solution):
    if isinstance(solution, TruncatedSolution):
        return solution.shares()
    return solution.region_masses()


def report(solution, engine, fallback=False, diagnostics=None) -> MetricsReport:
    e1, e2 = expected_queue_lengths(solution)
    return MetricsReport(e1, e2, e1 + e2, empty_probability(solution), region_shares(solution),
                         engine, fallback, diagnostics or {})


ANALYTIC_FAILURES = (SolveError, KernelError, ConformalError, MetricsError, ValueError)


def compute_metrics(spec, cfg: SolverConfig | None = None, fallback=True, trunc=None) -> MetricsReport:
    """Metrics from the analytic solve; when it is not applicable the
    truncation oracle is used and the report says so."""
    try:
        sol = solve_model(spec, cfg)
        diag = {"chi": list(sol.chi), "residual": sol.residuals["max"],
                "solvability": sol.residuals["solvability"]}
        return report(sol, "bvp", False, diag)
    except ANALYTIC_FAILURES as exc:
        if not fallback:
            raise
        from .stability import ERGODIC, classify_stability
        st = classify_stability(spec)
        if st.classification != ERGODIC:
            raise MetricsError(f"no stationary law to fall back on: walk is {st.classification} "
                               f"({st.reason})") from exc
        log.warning("analytic solve unavailable (%s); using truncation", exc)
        T1, T2 = trunc if trunc else (None, None)
        ts = truncated_stationary(spec, T1, T2)
        return report(ts, "truncation", True, {"reason": str(exc), "tail": ts.tail})


# ---------------------------------------------------------------- sweeps

METRIC_NAMES = ("EQ1", "EQ2", "EQ_total", "p_empty")


def _sweep_point(args):
    template, params, cfg, fallback = args
    from .templates import build_template
    try:
        spec = build_template(template, params)
        rep = compute_metrics(spec, cfg, fallback=fallback)
        row = {k: getattr(rep, k) for k in METRIC_NAMES}
        row.update(engine=rep.engine, fallback=rep.fallback,
                   chi=";".join(map(str, rep.diagnostics.get("chi", []))),
                   residual=rep.diagnostics.get("residual", ""), error="")
    except (ANALYTIC_FAILURES + (OracleError,)) as exc:
        row = {k: "" for k in METRIC_NAMES}
        row.update(engine="", fallback="", chi="", residual="", error=str(exc))
    return {**params, **row}


def sweep(template, grid: dict, metrics=METRIC_NAMES, cfg=None, jobs=1, fallback=True):
    """One row per point of the Cartesian product of ``grid`` (ordered as given)."""
    keys = list(grid)
    points = [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]
    tasks = [(template, p, cfg, fallback) for p in points]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    cols = keys + list(metrics) + ["engine", "fallback", "chi", "residual", "error"]
    return cols, [{c: r.get(c, "") for c in cols} for r in rows]


def write_csv(path, cols, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def monotone_flags(rows, key, by, value):
    """For each group of rows sharing ``by``, whether ``value`` is
    nondecreasing along ``key``."""
    groups = {}
    for r in rows:
        if r[value] == "" or r[value] is None:
            continue
        groups.setdefault(tuple(r[b] for b in by), []).append(r)
    out = {}
    for g, rs in groups.items():
        rs = sorted(rs, key=lambda r: r[key])
        vals = [float(r[value]) for r in rs]
        out[g] = all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    return out
