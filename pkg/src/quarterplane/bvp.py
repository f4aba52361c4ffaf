"""Riemann-Hilbert problem for the boundary function g0 on the contour M.

On M the functional equation gives Re(i U f) = w with U = A / (prod(x - xi) B),
f = prod(x - xi) g0 and w = Im(C / B).  Transplanted to the unit disc through
the conformal map, the problem is solved in closed form.  Every quantity that
depends on the unknown corner probabilities is carried as an affine array.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from .assembly import FunctionalCoeffs
from .conformal import (ConformalMap, conjugate, gamma0_deriv, gamma0_eval, gamma_inverse,
                        schwarz_coeffs, taylor_eval)
from .kernel import KernelPoly, PolarContour, root_Y0

log = logging.getLogger(__name__)


class BVPError(RuntimeError):
    pass


@dataclass(frozen=True)
class NearZero:
    """A zero (sigma = +1) or pole (sigma = -1) of U at x = zeta just off the
    contour; w is its preimage under the conformal map (|w| close to 1).

    Multiplying the unknown by m(z) = z - w (zero) or 1 - conj(w) z (pole)
    cancels the sharp phase swing of U near zeta exactly.
    """

    zeta: complex
    w: complex
    sigma: int

    def m(self, z, deriv=0):
        z = np.asarray(z, dtype=complex)
        if self.sigma > 0:
            return z - self.w if not deriv else np.ones_like(z)
        return 1 - np.conj(self.w) * z if not deriv else -np.conj(self.w) * np.ones_like(z)

    @property
    def root(self):
        """Zero of m inside the disc, or None."""
        if self.sigma > 0:
            return self.w if abs(self.w) < 1 else None
        return 1 / np.conj(self.w) if abs(self.w) > 1 else None


@dataclass(eq=False)
class RHProblem:
    cmap: ConformalMap
    contour: PolarContour
    x: np.ndarray  # boundary points gamma0(t_k)
    y: np.ndarray  # partner cut abscissae
    U: np.ndarray
    w: np.ndarray  # affine, real
    poles: list
    factors: list = field(default_factory=list)
    chi: int = 0
    kappa: int = 0  # index of the problem after the factors are removed
    alpha: np.ndarray | None = None
    phase_step: float = 0.0

    def multiplier(self, z, deriv=0):
        """m(z) = prod of the factor multipliers, or its derivative."""
        z = np.asarray(z, dtype=complex)
        vals = [f.m(z) for f in self.factors]
        if not deriv:
            return np.prod(vals, axis=0) if vals else np.ones_like(z)
        out = np.zeros_like(z)
        for i, f in enumerate(self.factors):
            out = out + f.m(z, 1) * np.prod([v for j, v in enumerate(vals) if j != i], axis=0)
        return out


@dataclass(eq=False)
class RHSolution:
    """f = T(z) / m(z) with T(z) = exp(-iS) sum_{n >= kappa} Phi_n z**(n - kappa)."""

    problem: RHProblem
    kappa: int
    S: np.ndarray  # Taylor coefficients of the phase function
    Phi: np.ndarray  # Taylor coefficients (affine) of the Schwarz integral
    F: np.ndarray  # boundary density (affine, real)
    conditions: np.ndarray  # complex affine solvability conditions
    nu: int = 0
    cache: dict = field(default_factory=dict)

    @property
    def chi(self):
        return self.problem.chi

    @property
    def n_free(self):
        """Real parameters left free when kappa <= 0: the constant K and, for
        kappa < 0, the Laurent coefficients c_j (j = 1..-kappa)."""
        return 0 if self.kappa > 0 else 1 - 2 * self.kappa

    @property
    def Psi(self):
        """Series multiplying exp(-iS): z**(-kappa) Phi with the conditioned
        low terms dropped."""
        if "Psi" not in self.cache:
            k = self.kappa
            if k >= 0:
                self.cache["Psi"] = self.Phi[k:]
            else:
                pad = np.zeros((-k,) + self.Phi.shape[1:], dtype=complex)
                self.cache["Psi"] = np.concatenate([pad, self.Phi])
        return self.cache["Psi"]

    def _free_poly(self):
        # z**q (iK + sum_j c_j z**-j - conj(c_j) z**j), one column per real parameter
        q = max(-self.kappa, 0)
        out = np.zeros((2 * q + 1, self.n_free), dtype=complex)
        if not self.n_free:
            return out
        out[q, 0] = 1j
        for j in range(1, q + 1):
            out[q - j, 2 * j - 1], out[q + j, 2 * j - 1] = 1, -1
            out[q - j, 2 * j], out[q + j, 2 * j] = 1j, 1j
        return out

    def _phase(self, z):
        return np.exp(-1j * taylor_eval(self.S, z))

    def _T_raw(self, z):
        z = np.asarray(z, dtype=complex)
        th = self._phase(z)[..., None] * taylor_eval(self.Psi, z)
        return th / self.problem.multiplier(z)[..., None]

    def _with_m(self, th, dth, z):
        m = self.problem.multiplier(z)[..., None]
        dm = self.problem.multiplier(z, 1)[..., None]
        return (dth - th * dm / m) / m

    def _T_deriv_raw(self, z):
        z = np.asarray(z, dtype=complex)
        ph = self._phase(z)[..., None]
        dS = taylor_eval(self.S, z, 1)[..., None]
        psi = taylor_eval(self.Psi, z)
        dth = ph * (taylor_eval(self.Psi, z, 1) - 1j * dS * psi)
        return self._with_m(ph * psi, dth, z)

    def _T_free_raw(self, z):
        z = np.asarray(z, dtype=complex)
        th = self._phase(z)[..., None] * taylor_eval(self._free_poly(), z)
        return th / self.problem.multiplier(z)[..., None]

    def _T_free_deriv_raw(self, z):
        z = np.asarray(z, dtype=complex)
        ph = self._phase(z)[..., None]
        dS = taylor_eval(self.S, z, 1)[..., None]
        poly = self._free_poly()
        val = taylor_eval(poly, z)
        dth = ph * (taylor_eval(poly, z, 1) - 1j * dS * val)
        return self._with_m(ph * val, dth, z)

    def _near_roots(self, fun, z, npts=64):
        """fun(z), except that points close to a zero a of m are evaluated by
        the Cauchy formula on a circle about a.  Per column that gives the
        regular part; the residues cancel in the combination that the point
        conditions enforce, so the total is unchanged."""
        z = np.asarray(z, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = fun(z)
        roots = [f.root for f in self.problem.factors if f.root is not None]
        if not roots or z.size == 0:
            return out
        for i, a in enumerate(roots):
            other = [abs(b - a) for j, b in enumerate(roots) if j != i]
            r = 0.5 * min([1 - abs(a)] + other)
            near = np.abs(z - a) < 0.5 * r
            if not np.any(near):
                continue
            th = 2 * np.pi * np.arange(npts) / npts
            zeta = a + r * np.exp(1j * th)
            vals = fun(zeta)
            zn = z[near]
            # trapezoidal Cauchy formula: f(z) = mean(f(zeta) (zeta - a) / (zeta - z))
            wgt = (zeta - a)[None, :] / (zeta[None, :] - zn[:, None]) / npts
            out[near] = np.tensordot(wgt, vals, axes=(1, 0))
        return out

    def T(self, z):
        """f(gamma0(z)) as an affine array (low Taylor terms removed by the
        solvability conditions)."""
        return self._near_roots(self._T_raw, z)

    def T_deriv(self, z):
        return self._near_roots(self._T_deriv_raw, z)

    def T_free(self, z):
        """Solutions multiplying the free real parameters (shape z.shape + (n_free,))."""
        return self._near_roots(self._T_free_raw, z)

    def T_free_deriv(self, z):
        return self._near_roots(self._T_free_deriv_raw, z)

    def point_conditions(self):
        """m f must vanish where m does: complex affine rows and the matching
        coefficients of the free parameters."""
        roots = [f.root for f in self.problem.factors if f.root is not None]
        if not roots:
            return np.zeros((0, self.nu + 1), dtype=complex), np.zeros((0, self.n_free), dtype=complex)
        z = np.array(roots, dtype=complex)
        ph = self._phase(z)[:, None]
        return ph * taylor_eval(self.Psi, z), ph * taylor_eval(self._free_poly(), z)

    def pole_factor(self, x):
        x = np.asarray(x, dtype=complex)
        out = np.ones(x.shape, dtype=complex)
        for xi in self.problem.poles:
            out = out * (x - xi)
        return out

    def g0(self, x):
        """Affine values of g0 at points strictly inside the contour."""
        x = np.asarray(x, dtype=complex)
        z = gamma_inverse(self.problem.cmap, x.reshape(-1)).reshape(x.shape)
        return self.T(z) / self.pole_factor(x)[..., None]

    def g0_free(self, x):
        x = np.asarray(x, dtype=complex)
        z = gamma_inverse(self.problem.cmap, x.reshape(-1)).reshape(x.shape)
        return self.T_free(z) / self.pole_factor(x)[..., None]

    def g0_boundary(self):
        """Affine boundary values f / prod(x - xi) on the nodes."""
        t = np.exp(1j * self.problem.cmap.phi)
        return self.T(t) / self.pole_factor(self.problem.x)[..., None]


# ---------------------------------------------------------------- boundary condition

def _partner_y(contour: PolarContour, x):
    th = np.mod(np.angle(x), 2 * np.pi)
    th = np.where(th > np.pi, 2 * np.pi - th, th)
    return contour.y_of_angle(th)


def find_poles(fc: FunctionalCoeffs, kp: KernelPoly, contour: PolarContour, n_theta=256, n_r=48):
    """Zeros of A(x, Y0(x)) in the part of the contour interior outside the
    unit circle, located on a polar raster and polished by Newton."""
    th = 2 * np.pi * (np.arange(n_theta) + 0.5) / n_theta
    rho = contour.rho_of(th)
    if np.all(rho <= 1 + 1e-9):
        return []

    def F(x):
        x = np.asarray(x, dtype=complex)
        return fc.A(x, root_Y0(kp, x))

    # argument principle on the region boundary; x = 1 is always a zero of A
    # (flux balance of the column chain), so the inner circle is pushed out a bit
    def wind(curve):
        n = 4096
        while True:
            tb = 2 * np.pi * np.arange(n) / n
            v = F(curve(tb))
            d = np.angle(np.roll(v, -1) / v)
            if np.max(np.abs(d)) < np.pi / 4 or n >= 2 ** 21:
                return d.sum() / (2 * np.pi)
            n *= 4

    r_in = 1 + 1e-4
    outer = lambda t: np.maximum(contour.rho_of(t), r_in) * np.exp(1j * t)
    inner = lambda t: r_in * np.exp(1j * t)
    count = int(round(wind(outer) - wind(inner)))
    # poles of A inside the region: roots of f3 at cells 1..N2-1 (the last
    # band polynomial cancels against the 1 / f3 in the top column)
    npoles = 0
    for c in range(1, fc.spec.N2):
        co = fc.gx.f3[c]
        for r in (np.roots(np.trim_zeros(co, "b")[::-1]) if np.any(co[1:]) else []):
            if abs(r) > 1 and contour.contains(r):
                npoles += 1
    count += npoles
    if count <= 0:
        return []
    rs = np.linspace(0, 1, n_r + 2)[1:-1]
    R, TH = np.meshgrid(rs, th, indexing="ij")
    rad = r_in + R * (np.maximum(rho, r_in) - r_in)[None, :]
    grid = rad * np.exp(1j * TH)
    vals = np.abs(F(grid))
    cand = []
    for i in range(1, n_r - 1):
        for j in range(n_theta):
            v = vals[i, j]
            nb = [vals[i - 1, j], vals[i + 1, j], vals[i, j - 1], vals[i, (j + 1) % n_theta]]
            if v <= min(nb):
                cand.append(grid[i, j])
    roots = []
    for z in cand:
        for _ in range(50):
            h = 1e-6 * max(1.0, abs(z))
            d = (F(z + h) - F(z - h)) / (2 * h)
            step = F(z) / d
            z = z - step
            if abs(step) < 1e-14:
                break
        if abs(F(z)) < 1e-10 and abs(z) > r_in and contour.contains(z):
            if all(abs(z - r) > 1e-7 for r in roots):
                roots.append(complex(z))
    if len(roots) != count:
        raise BVPError(f"pole search found {len(roots)} zeros, argument principle says {count}")
    if len(roots) > 3:
        raise BVPError("more than three poles of the boundary function: unsupported")
    return roots


def _newton_on_curve(kp, G, x, y, scale, iters=60):
    """Solve K(x, y) = 0, G(x, y) = 0 from (x, y); None if it does not converge."""
    for _ in range(iters):
        k, g = kp(x, y), G(x, y)
        h = 1e-7 * max(1.0, abs(x), abs(y))
        J = np.array([[(kp(x + h, y) - kp(x - h, y)) / (2 * h), (kp(x, y + h) - kp(x, y - h)) / (2 * h)],
                      [(G(x + h, y) - G(x - h, y)) / (2 * h), (G(x, y + h) - G(x, y - h)) / (2 * h)]])
        try:
            dx, dy = np.linalg.solve(J, [k, g])
        except np.linalg.LinAlgError:
            return None
        x, y = x - dx, y - dy
        if not (np.isfinite(x) and np.isfinite(y)):
            return None
        if abs(dx) < 1e-14 * max(1.0, abs(x)):
            break
    if abs(kp(x, y)) > 1e-11 or abs(G(x, y)) > 1e-9 * scale:
        return None
    return complex(x)


def _preimage(cmap, t, x0, zeta):
    """w with gamma0(w) = zeta for zeta near the boundary point x0 = gamma0(t)."""
    w = t + (zeta - x0) / gamma0_deriv(cmap, t)
    for _ in range(8):
        # the series may diverge outside the disc; keep the linear estimate then
        with np.errstate(all="ignore"):
            f = w * np.exp(cmap.H(w)) - zeta
            d = np.exp(cmap.H(w)) * (1 + w * cmap.H(w, 1))
            step = f / d
        if not np.isfinite(step) or abs(step) > abs(w - t):
            break
        w = w - step
        if abs(step) < 1e-15:
            break
    return complex(w)


def find_near_zeros(fc: FunctionalCoeffs, kp: KernelPoly, cmap: ConformalMap, x, y, a, b, poles,
                    band=0.05, ratio=0.1):
    """Zeros of A and B (and poles of A) on the curve K = 0 that sit within
    ``band`` of the contour in the disc coordinate.  They make arg U turn
    sharply and would otherwise need a very fine boundary sampling."""
    t = np.exp(1j * cmap.phi)
    out = []

    def keep(zeta, k, sigma):
        if any(abs(zeta - f.zeta) < 1e-8 for f in out):
            return
        w = _preimage(cmap, t[k], x[k], zeta)
        if abs(abs(w) - 1) < 1e-10:
            raise BVPError("U vanishes on the contour")
        if abs(abs(w) - 1) < band:
            out.append(NearZero(complex(zeta), w, sigma))

    for vals, G, sigma in ((a, fc.A, 1), (b, fc.B, -1)):
        mag = np.abs(vals)
        med = float(np.median(mag))
        loc = (mag <= np.roll(mag, 1)) & (mag <= np.roll(mag, -1)) & (mag < ratio * med)
        for k in np.nonzero(loc)[0]:
            zeta = _newton_on_curve(kp, G, x[k], y[k], med)
            if zeta is None:
                continue
            if sigma > 0 and any(abs(zeta - xi) < 1e-7 for xi in poles):
                continue
            keep(zeta, k, sigma)
    # poles of A sit at roots of the band polynomials f3 below the top cell
    for c in range(1, fc.spec.N2):
        co = np.trim_zeros(fc.gx.f3[c], "b")
        for r in (np.roots(co[::-1]) if len(co) > 1 else []):
            k = int(np.argmin(np.abs(x - r)))
            keep(r, k, -1)
    return out


def assemble_boundary_condition(fc: FunctionalCoeffs, kp: KernelPoly, contour: PolarContour,
                                cmap: ConformalMap, poles=None, factors=None) -> RHProblem:
    x = cmap.boundary()
    y = _partner_y(contour, x)
    a, b, c = fc.all(x, y)
    if np.min(np.abs(b)) < 1e-12 * max(1.0, np.abs(b).max()):
        raise BVPError("B vanishes on the cut: the division step is not allowed")
    if poles is None:
        poles = find_poles(fc, kp, contour)
    pf = np.ones_like(x)
    for xi in poles:
        pf = pf * (x - xi)
    if factors is None:
        factors = find_near_zeros(fc, kp, cmap, x, y, a / pf, b, poles)
    U = a / (pf * b)
    if np.min(np.abs(U)) == 0:
        raise BVPError("U vanishes on the contour")
    w = (c / b[:, None]).imag
    prob = RHProblem(cmap, contour, x, y, U, w, list(poles), list(factors))
    prob.chi = compute_index(prob)
    return prob


def compute_index(prob: RHProblem) -> int:
    """chi = -(winding number of U along the contour).

    The solution carries the factor z**chi, so chi counts full turns of arg U
    (increment divided by 2 pi), negated.  The turns contributed by the
    near-contour factors are counted in closed form: each factor whose
    multiplier vanishes inside the disc adds one.
    """
    t = np.exp(1j * prob.cmap.phi)
    m = prob.multiplier(t)
    ang = np.angle(1j * prob.U * np.conj(m))
    steps = np.angle(np.exp(1j * np.diff(np.concatenate([ang, ang[:1]]))))
    prob.phase_step = float(np.max(np.abs(steps)))
    if prob.phase_step > np.pi / 2:
        raise BVPError("boundary sampling too coarse to follow arg U")
    prob.alpha = ang[0] + np.concatenate([[0.0], np.cumsum(steps[:-1])])
    prob.kappa = int(round(steps.sum() / (2 * np.pi)))
    inside = sum(1 for f in prob.factors if f.root is not None)
    return -(prob.kappa + inside)


def trim_series(coef, rel=1e-17):
    """Drop trailing Taylor coefficients that cannot affect values in the disc."""
    mag = np.abs(coef).reshape(coef.shape[0], -1).max(axis=1)
    big = np.nonzero(mag > rel * mag.max())[0]
    n = int(big[-1]) + 1 if big.size else 1
    return coef[:max(n, 1)]


def spectral_tail(samples):
    """Largest Fourier magnitude in the top tenth of the resolved band,
    relative to the largest one (resolution check for boundary data)."""
    c = np.abs(np.fft.rfft(np.asarray(samples), axis=0))
    c = c.reshape(c.shape[0], -1).max(axis=1)
    n = c.shape[0]
    return float(c[int(0.9 * n):].max() / max(c.max(), 1e-300))


def solve_rh(prob: RHProblem) -> RHSolution:
    """Closed-form solution T = exp(-iS) z**(-kappa) (Phi + iK) of the problem
    for m f, where m removes the near-contour factors.

    Re S interpolates arg(iU conj(m)) - kappa * arg t on the circle and Phi is
    the Schwarz integral of w |m| exp(-Im S) / |U|.  For kappa > 0 the first
    kappa Taylor coefficients of Phi must vanish (K = 0).  For kappa <= 0, K and
    the coefficients of sum_j c_j z**-j - conj(c_j) z**j stay free and are
    fixed by the corner system.
    """
    kappa = prob.kappa
    at = prob.alpha - kappa * prob.cmap.phi
    S = schwarz_coeffs(at)
    t = np.exp(1j * prob.cmap.phi)
    scale = np.abs(prob.multiplier(t)) / np.abs(prob.U)
    F = prob.w * (np.exp(-conjugate(at)) * scale)[:, None]
    Phi = schwarz_coeffs(F)
    nu = prob.w.shape[1] - 1
    sol = RHSolution(prob, kappa, trim_series(S), trim_series(Phi), F, Phi[:max(kappa, 0)].copy(), nu)
    sol.cache["tail"] = max(spectral_tail(at), spectral_tail(F))
    return sol


def solvability_conditions(sol: RHSolution):
    """The -chi complex conditions (Taylor coefficients k = 0..-chi-1 of the
    Schwarz integral), as affine arrays."""
    return sol.conditions


def real_conditions(sol: RHSolution):
    """Real rows of the solvability conditions; the k = 0 one is real already."""
    rows = []
    for k, c in enumerate(sol.conditions):
        rows.append(c.real)
        if k:
            rows.append(c.imag)
    return np.array(rows).reshape(-1, sol.nu + 1)


# ---------------------------------------------------------------- Cauchy integrals

def cauchy_coeffs(fun, center, radius, orders, m=64):
    """Laurent coefficients c_j of ``fun`` on the circle |x - center| = radius.

    ``fun`` maps an array of points to an array whose leading axis matches.
    """
    th = 2 * np.pi * np.arange(m) / m
    pts = center + radius * np.exp(1j * th)
    vals = np.asarray(fun(pts))
    out = []
    for j in orders:
        wgt = np.exp(-1j * j * th) / (m * radius ** j)
        out.append(np.tensordot(wgt, vals, axes=(0, 0)))
    return np.array(out)


def g0_derivatives_at_zero(sol: RHSolution, order, radius=None, m=64):
    """Affine Taylor data d^j g0/dx^j (0), j = 0..order."""
    ct = sol.problem.contour
    rmin = float(np.min(ct.rho_of(np.linspace(0, np.pi, 721))))
    if radius is None:
        radius = 0.5 * rmin
    if radius >= rmin:
        raise BVPError("Cauchy circle leaves the contour")
    c = cauchy_coeffs(sol.g0, 0.0, radius, range(order + 1), m)
    fact = np.cumprod([1.0] + list(range(1, order + 1)))
    return c * fact[:, None]


def polyder_eval(co, x, d=0):
    return P.polyval(x, P.polyder(co, d) if d else co)
