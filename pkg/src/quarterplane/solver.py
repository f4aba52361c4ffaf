"""Closing the corner system and reconstructing the stationary law.

The two boundary functions g0 (on M) and h0 (on L, obtained from the
transposed walk) are affine in the corner probabilities.  The equations

* balance at the states of S_a,
* analyticity of every g_k / h_k inside the unit disc together with
  g_k(0) = pi(N1, k), h_k(0) = pi(k, N2),
* normalization,
* the solvability conditions of both boundary value problems,

are stacked and solved by least squares; consistency is checked, not assumed.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from .affine import evaluate
from .assembly import (CramerComponents, FunctionalCoeffs, n_unknowns, permute_affine,
                       transpose_perm, uidx)
from .bvp import (BVPError, RHSolution, assemble_boundary_condition, cauchy_coeffs,
                  real_conditions, solve_rh)
from .conformal import solve_theodorsen
from .kernel import KernelPoly, PolarContour, contour_M, kernel_coeffs, root_Y0
from .model import EXTENDED, ModelSpec

log = logging.getLogger(__name__)


class SolveError(RuntimeError):
    def __init__(self, msg, details=None):
        super().__init__(msg)
        self.details = details or {}


@dataclass
class SolverConfig:
    J: int = 1000
    tol: float = 1e-6  # Theodorsen stopping tolerance
    consistency_tol: float = 1e-8
    negative_tol: float = 1e-8
    cauchy_points: int = 256
    map_tol: float = 1e-13  # the solver iterates the map to min(tol, map_tol)
    tail_tol: float = 1e-12  # relative Fourier tail of the boundary data
    max_J: int = 64000


# ---------------------------------------------------------------- one boundary side

@dataclass(eq=False)
class BoundarySide:
    """A boundary function (g0 for axis 0, h0 for axis 1) with its column
    functions g_k = e_k g0 + t_k, lifted to the global unknown vector.

    The global vector is the corner grid followed by the free constants of
    zero-index problems.
    """

    axis: int
    spec: ModelSpec  # the walk seen from this side (transposed for h)
    sol: RHSolution
    comps: CramerComponents
    contour: PolarContour
    kp: KernelPoly
    perm: np.ndarray | None
    n_total: int
    ext_col: int | None = None  # first global column of the free parameters

    @property
    def free(self):
        """Affine columns of the free parameters (empty slice when none)."""
        if self.ext_col is None:
            return slice(0, 0)
        return slice(1 + self.ext_col, 1 + self.ext_col + self.sol.n_free)

    def lift(self, arr):
        arr = np.asarray(arr)
        if self.perm is not None:
            arr = permute_affine(arr, self.perm)
        pad = self.n_total - (arr.shape[-1] - 1)
        if pad:
            arr = np.concatenate([arr, np.zeros(arr.shape[:-1] + (pad,), dtype=arr.dtype)], axis=-1)
        return arr

    @property
    def chi(self):
        return self.sol.chi

    def value(self, x):
        x = np.asarray(x, dtype=complex)
        out = self.lift(self.sol.g0(x))
        if self.ext_col is not None:
            out[..., self.free] = self.sol.g0_free(x)
        return out

    def columns(self, x):
        """Affine g_k(x), k = 0..N (shape x.shape + (N+1, 1+n))."""
        x = np.asarray(x, dtype=complex)
        e, t = self.comps(x)
        v = self.value(x)
        return e[..., None] * v[..., None, :] + self.lift(t)

    def conditions(self):
        """Real rows: Taylor solvability conditions, then the vanishing of m f
        at the zeros of the near-contour multiplier."""
        rows = self.lift(real_conditions(self.sol))
        pc, hom = self.sol.point_conditions()
        if not len(pc):
            return rows
        pc = self.lift(pc)
        if self.ext_col is not None:
            pc[:, self.free] = hom
        return np.concatenate([rows, pc.real, pc.imag])

    def f3_roots(self):
        roots = []
        for c in range(1, self.spec.N2 + 1):
            co = np.trim_zeros(self.comps.f3[c], "b")
            if len(co) > 1:
                roots.extend(np.roots(co[::-1]))
        return np.array(roots, dtype=complex)

    def inner_radius(self):
        """Radius of a circle about 0 inside both the unit disc and the contour
        that encloses every pole of the column functions inside the disc."""
        R = min(1.0, float(np.min(self.contour.rho_of(np.linspace(0, np.pi, 1441)))))
        r = np.abs(self.f3_roots())
        r = r[r < R]
        rmax = float(r.max()) if r.size else 0.0
        if R - rmax < 1e-3:
            raise SolveError("column poles too close to the unit circle")
        return 0.5 * (rmax + R), r

    def one_radius(self):
        """Radius of a circle about x = 1 inside the contour avoiding the other
        singularities of g(x, 1)."""
        pts = self.contour.points()
        d = [np.min(np.abs(pts - 1.0))]
        a = sum(self.spec.p(self.spec.N1, self.spec.N2, 1, j) for j in (-1, 0, 1))
        c = sum(self.spec.p(self.spec.N1, self.spec.N2, -1, j) for j in (-1, 0, 1))
        if a > 0:
            d.append(abs(c / a - 1.0))
        roots = self.f3_roots()
        if roots.size:
            d.append(float(np.min(np.abs(roots - 1.0))))
        for xi in self.sol.problem.poles:
            d.append(abs(xi - 1.0))
        return 0.5 * min(d)


def _build_side(spec: ModelSpec, axis: int, cfg: SolverConfig, n_total: int, perm=None):
    """Contour, conformal map and boundary value problem for one side.

    The node count starts at ``cfg.J`` and is quadrupled while the boundary
    data are not resolved (large phase steps or a heavy Fourier tail).
    """
    kp = kernel_coeffs(spec)
    ct = contour_M(kp)
    fc = FunctionalCoeffs(spec)
    poles = None
    J = cfg.J
    while True:
        cmap = solve_theodorsen(ct, J=J, tol=min(cfg.tol, cfg.map_tol))
        try:
            prob = assemble_boundary_condition(fc, kp, ct, cmap, poles=poles)
            poles = prob.poles
            sol = solve_rh(prob)
            ok = prob.phase_step < np.pi / 8 and sol.cache["tail"] < cfg.tail_tol
        except BVPError as exc:
            if "too coarse" not in str(exc):
                raise
            ok = False
        if ok:
            break
        if J >= cfg.max_J:
            raise SolveError(f"boundary data unresolved with {J} nodes")
        J *= 4
        log.info("refining boundary sampling to J=%d", J)
    side = BoundarySide(axis, spec, sol, fc.gx, ct, kp, perm, n_total)
    side.fc = fc
    side.J = J
    return side


# ---------------------------------------------------------------- stationary solution

@dataclass(eq=False)
class StationarySolution:
    spec: ModelSpec
    u: np.ndarray  # extended unknown vector
    g_side: BoundarySide
    h_side: BoundarySide
    fc: FunctionalCoeffs
    residuals: dict = field(default_factory=dict)
    clipped: float = 0.0
    timings: dict = field(default_factory=dict)

    @property
    def nu(self):
        return n_unknowns(self.spec)

    @property
    def corner(self):
        N1, N2 = self.spec.N1, self.spec.N2
        return self.u[:self.nu].reshape(N1 + 1, N2 + 1)

    @property
    def chi(self):
        return self.g_side.chi, self.h_side.chi

    def prob(self, n1, n2):
        return float(self.corner[n1, n2])

    def g0(self, x):
        return evaluate(self.g_side.value(x), self.u)

    def h0(self, y):
        return evaluate(self.h_side.value(y), self.u)

    def g_columns(self, x):
        return evaluate(self.g_side.columns(x), self.u)

    def h_rows(self, y):
        return evaluate(self.h_side.columns(y), self.u)

    def _C(self, x, y):
        return evaluate(_lift_plain(self.fc.C(x, y), len(self.u)), self.u)

    def numerator(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=complex), np.asarray(y, dtype=complex))
        a = self.fc.A(x, y)
        b = self.fc.B(x, y)
        return a * self.g0(x) + b * self.h0(y) + self._C(x, y)

    def joint_pgf(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=complex), np.asarray(y, dtype=complex))
        kp = kernel_coeffs(self.spec)
        r = kp(x, y)
        if np.any(np.abs(r) < 1e-13):
            raise SolveError("joint pgf evaluated at a kernel zero")
        return self.numerator(x, y) / r

    def g_at_one(self, order=1, axis=0):
        """Taylor data of x -> g(x, 1) (axis 0) or y -> g(1, y) (axis 1) about 1."""
        side = self.g_side if axis == 0 else self.h_side
        r = side.one_radius()
        if axis == 0:
            fun = lambda x: self.joint_pgf(x, np.ones_like(x))
        else:
            fun = lambda y: self.joint_pgf(np.ones_like(y), y)
        c = cauchy_coeffs(fun, 1.0, r, range(order + 1), 256)
        return c * np.cumprod([1.0] + list(range(1, order + 1)))

    def column_at_one(self, side="g", order=1):
        s = self.g_side if side == "g" else self.h_side
        r = s.one_radius()
        fun = lambda x: evaluate(s.columns(x), self.u)
        c = cauchy_coeffs(fun, 1.0, r, range(order + 1), 256)
        return c * np.cumprod([1.0] + list(range(1, order + 1)))[:, None]

    def region_masses(self):
        N1, N2 = self.spec.N1, self.spec.N2
        sa = float(self.corner[:N1, :N2].sum())
        gcols = self.column_at_one("g", 0)[0].real
        hrows = self.column_at_one("h", 0)[0].real
        sb = float(gcols[:N2].sum())
        sc = float(hrows[:N1].sum())
        sd = float(self.g_at_one(0)[0].real)
        return {"S_a": sa, "S_b": sb, "S_c": sc, "S_d": sd}

    def probabilities(self, W1, W2, m=256):
        """Stationary probabilities on the window [0, W1] x [0, W2]."""
        N1, N2 = self.spec.N1, self.spec.N2
        out = np.zeros((W1 + 1, W2 + 1))
        a, b = min(W1, N1), min(W2, N2)
        out[:a + 1, :b + 1] = self.corner[:a + 1, :b + 1]
        if W1 > N1:
            r, _ = self.g_side.inner_radius()
            c = cauchy_coeffs(self.g_columns, 0.0, r, range(0, W1 - N1 + 1), m).real
            out[N1:, :b + 1] = c[:, :b + 1]
        if W2 > N2:
            r, _ = self.h_side.inner_radius()
            c = cauchy_coeffs(self.h_rows, 0.0, r, range(0, W2 - N2 + 1), m).real
            out[:a + 1, N2:] = c[:, :a + 1].T
        if W1 > N1 and W2 > N2:
            out[N1:, N2:] = self._corner_block(W1 - N1, W2 - N2, m)
        return out

    def window(self, W1, W2):
        return self.probabilities(W1, W2)

    def _torus(self):
        """Radii of a torus inside the analyticity domain that keeps away from
        the kernel zeros."""
        kp = kernel_coeffs(self.spec)
        rg, _ = self.g_side.inner_radius()
        rh, _ = self.h_side.inner_radius()
        th = 2 * np.pi * np.arange(64) / 64
        best, pick = -1.0, (rg, rh)
        for fx in np.linspace(0.5, 1.0, 6):
            for fy in np.linspace(0.5, 1.0, 6):
                X, Y = np.meshgrid(fx * rg * np.exp(1j * th), fy * rh * np.exp(1j * th))
                q = float(np.min(np.abs(kp(X, Y))))
                if q > best:
                    best, pick = q, (fx * rg, fy * rh)
        return pick

    def _corner_block(self, M1, M2, m=128):
        rx, ry = self._torus()
        th = 2 * np.pi * np.arange(m) / m
        X, Y = np.meshgrid(rx * np.exp(1j * th), ry * np.exp(1j * th), indexing="ij")
        vals = self.joint_pgf(X, Y)
        c = np.fft.fft2(vals) / (m * m)
        j1 = np.arange(M1 + 1)[:, None]
        j2 = np.arange(M2 + 1)[None, :]
        return (c[:M1 + 1, :M2 + 1] / (rx ** j1 * ry ** j2)).real

    def moments(self):
        """(E Q1, E Q2) from the boundary functions and the joint pgf at 1."""
        from .metrics import expected_queue_lengths
        return expected_queue_lengths(self)


def _lift_plain(arr, n_total):
    pad = n_total - (arr.shape[-1] - 1)
    if pad:
        arr = np.concatenate([arr, np.zeros(arr.shape[:-1] + (pad,), dtype=arr.dtype)], axis=-1)
    return arr


# ---------------------------------------------------------------- corner system

def _equilibrium_rows(spec, n_total):
    N1, N2 = spec.N1, spec.N2
    rows, labels = [], []
    for n1 in range(N1):
        for n2 in range(N2):
            row = np.zeros(1 + n_total)
            row[1 + uidx(spec, n1, n2)] += 1.0
            for i in (-1, 0, 1):
                for j in (-1, 0, 1):
                    m1, m2 = n1 - i, n2 - j
                    if m1 < 0 or m2 < 0:
                        continue
                    row[1 + uidx(spec, m1, m2)] -= spec.p(m1, m2, i, j)
            rows.append(row)
            labels.append(f"balance({n1},{n2})")
    return rows, labels


def _column_rows(side: BoundarySide, spec, n_total, m):
    """Analyticity of each column function and its value at 0."""
    r, inner = side.inner_radius()
    N = side.spec.N2
    nz = len(inner)
    cf = cauchy_coeffs(side.columns, 0.0, r, range(-nz, 1), m)  # (nz+1, N+1, 1+n)
    rows, labels = [], []
    name = "g" if side.axis == 0 else "h"
    for k in range(N + 1):
        # poles of g_k come from f3 at cells 1..k only
        nk = 0
        for c in range(1, k + 1):
            co = np.trim_zeros(side.comps.f3[c], "b")
            if len(co) > 1:
                nk += int(np.sum(np.abs(np.roots(co[::-1])) < r))
        for j in range(1, nk + 1):
            row = cf[nz - j, k]
            rows.extend([row.real, row.imag])
            labels.extend([f"{name}{k}:laurent(-{j}).re", f"{name}{k}:laurent(-{j}).im"])
        row = cf[nz, k].copy()
        n1, n2 = (spec.N1, k) if side.axis == 0 else (k, spec.N2)
        row[1 + uidx(spec, n1, n2)] -= 1.0
        rows.extend([row.real, row.imag])
        labels.extend([f"{name}{k}(0).re", f"{name}{k}(0).im"])
    return rows, labels


def _interior_pole_rows(side: BoundarySide, m):
    """Zero residue of A g0 + C at poles of the lower columns that lie inside
    the contour but outside the unit disc.

    Along K = 0 the combination equals -B h0, which is analytic there, so the
    continued boundary function must cancel the pole.
    """
    N = side.spec.N2
    comps = side.comps
    roots = side.f3_roots()
    pts = side.contour.points()
    # a pole near the contour is also a factor with the same zeta
    special = [complex(xi) for xi in side.sol.problem.poles]
    special += [complex(f.zeta) for f in (side.sol.problem.factors or [])]
    rows, labels = [], []
    name = "g" if side.axis == 0 else "h"
    for c in range(1, N):
        co = np.trim_zeros(comps.f3[c], "b")
        if len(co) < 2:
            continue
        for r in np.roots(co[::-1]):
            if abs(r) <= 1 or not side.contour.contains(r):
                continue
            d = [abs(r) - 1, float(np.min(np.abs(pts - r)))]
            d += [abs(r - q) for q in roots if abs(r - q) > 1e-9]
            d += [abs(r - q) for q in special if abs(r - q) > 1e-9]
            rad = 0.5 * min(d)
            if rad < 1e-6:
                raise SolveError("column pole too close to another singularity")

            def fun(x):
                g = side.columns(x)
                y = root_Y0(side.kp, x)
                f1 = P.polyval(x, comps.f1[N - 1])
                f3 = P.polyval(x, comps.f3[N])
                return (y * f1)[:, None] * g[:, N - 1] - f3[:, None] * g[:, N]

            row = cauchy_coeffs(fun, r, rad, [-1], m)[0]
            rows.extend([row.real, row.imag])
            labels.extend([f"{name}:residue({r:.4g}).re", f"{name}:residue({r:.4g}).im"])
    return rows, labels


def corner_linear_system(spec: ModelSpec, g_side: BoundarySide, h_side: BoundarySide,
                         cfg: SolverConfig | None = None) -> StationarySolution:
    cfg = cfg or SolverConfig()
    nu = n_unknowns(spec)
    n_total = g_side.n_total
    N1, N2 = spec.N1, spec.N2
    fc = FunctionalCoeffs(spec)
    m = cfg.cauchy_points

    rows, labels = _equilibrium_rows(spec, n_total)
    for side in (g_side, h_side):
        for part in (_column_rows(side, spec, n_total, m), _interior_pole_rows(side, m)):
            rows += part[0]
            labels += part[1]

    # normalization: S_a + columns at 1 + rows at 1 + g(1, 1) = 1
    norm = np.zeros(1 + n_total, dtype=complex)
    norm[0] = -1.0
    for n1 in range(N1):
        for n2 in range(N2):
            norm[1 + uidx(spec, n1, n2)] += 1.0
    rg = g_side.one_radius()
    gc = cauchy_coeffs(g_side.columns, 1.0, rg, [0], m)[0]
    norm += gc[:N2].sum(axis=0)
    hc = cauchy_coeffs(h_side.columns, 1.0, h_side.one_radius(), [0], m)[0]
    norm += hc[:N1].sum(axis=0)
    kp = kernel_coeffs(spec)
    h1 = h_side.value(np.ones(1))[0]

    def g_x1(x):
        one = np.ones_like(x)
        a = fc.A(x, one)
        b = fc.B(x, one)
        num = a[:, None] * g_side.value(x) + b[:, None] * h1[None, :] + \
            _lift_plain(fc.C(x, one), n_total)
        return num / kp(x, one)[:, None]

    norm += cauchy_coeffs(g_x1, 1.0, rg, [0], m)[0]
    rows.extend([norm.real, norm.imag])
    labels.extend(["normalization.re", "normalization.im"])

    for side, name in ((g_side, "g"), (h_side, "h")):
        cond = side.conditions()
        for k, row in enumerate(cond):
            rows.append(row)
            labels.append(f"{name}:solvability[{k}]")

    Mfull = np.array(rows)
    A = Mfull[:, 1:]
    rhs = -Mfull[:, 0]
    # imaginary parts of real-valued quantities are pure rounding noise
    size = np.abs(Mfull).max(axis=1)
    keep = size > 1e-10 * size.max()
    As, bs = A[keep], rhs[keep]
    u, *_ = np.linalg.lstsq(As, bs, rcond=None)
    sv = np.linalg.svd(As, compute_uv=False)
    res = A @ u - rhs
    worst = float(np.max(np.abs(res)))
    rank = int(np.sum(sv > sv[0] * 1e-12))
    residuals = {
        "max": worst,
        "rank": rank,
        "unknowns": n_total,
        "cond": float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf,
        "per_equation": {lab: float(abs(v)) for lab, v in zip(labels, res)},
    }
    if rank < n_total:
        raise SolveError(f"corner system is rank deficient ({rank} < {n_total})", residuals)
    if worst > cfg.consistency_tol:
        bad = sorted(residuals["per_equation"].items(), key=lambda kv: -kv[1])[:5]
        raise SolveError(f"corner system inconsistent (max residual {worst:.2e})",
                         {"worst": bad, **{k: v for k, v in residuals.items() if k != 'per_equation'}})
    pi = u[:nu]
    neg = float(min(0.0, pi.min()))
    if neg < -cfg.negative_tol:
        raise SolveError(f"negative corner probability {neg:.2e}")
    clipped = -neg
    u = u.copy()
    u[:nu] = np.maximum(pi, 0.0)
    sol = StationarySolution(spec, u, g_side, h_side, fc, residuals, clipped)
    sol.residuals["solvability"] = float(max(
        np.max(np.abs(evaluate(g_side.conditions(), u)), initial=0.0),
        np.max(np.abs(evaluate(h_side.conditions(), u)), initial=0.0)))
    return sol


def evaluate_joint_pgf(solution: StationarySolution, x, y):
    return solution.joint_pgf(x, y)


def solve_model(spec: ModelSpec, cfg: SolverConfig | None = None) -> StationarySolution:
    """Full analytic pipeline: contours, conformal maps, both boundary value
    problems and the corner system."""
    cfg = cfg or SolverConfig()
    if spec.mode == EXTENDED:
        raise SolveError("the analytic solve covers nearest-neighbour walks only")
    t0 = time.perf_counter()
    nu = n_unknowns(spec)
    kp = kernel_coeffs(spec)
    ex, ey = kp.drifts
    if ex >= 0 or ey >= 0:
        raise SolveError(f"corner drifts must be negative (got {ex:.3g}, {ey:.3g})")
    try:
        g = _build_side(spec, 0, cfg, nu)
        h = _build_side(spec.transposed(), 1, cfg, nu, perm=transpose_perm(spec))
    except BVPError as exc:
        raise SolveError(str(exc)) from exc
    n_total = nu
    for side in (g, h):
        if side.sol.n_free:
            side.ext_col = n_total
            n_total += side.sol.n_free
    g.n_total = h.n_total = n_total
    t1 = time.perf_counter()
    sol = corner_linear_system(spec, g, h, cfg)
    sol.timings = {"bvp": t1 - t0, "system": time.perf_counter() - t1}
    log.info("solve: chi=(%d,%d) residual=%.2e", g.chi, h.chi, sol.residuals["max"])
    return sol
