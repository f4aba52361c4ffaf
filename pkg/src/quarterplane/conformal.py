"""Conformal map of the unit disc onto the interior of a star-shaped contour,
obtained from Theodorsen's integral equation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class ConformalError(RuntimeError):
    pass


def conjugate(u):
    """Discrete conjugate function of periodic samples (trigonometric
    interpolant, Nyquist mode dropped).  Works along axis 0."""
    u = np.asarray(u)
    J = u.shape[0]
    c = np.fft.fft(u, axis=0)
    k = np.fft.fftfreq(J, 1.0 / J)
    mult = -1j * np.sign(k)
    if J % 2 == 0:
        mult[J // 2] = 0.0
    shape = (J,) + (1,) * (u.ndim - 1)
    return np.fft.ifft(c * mult.reshape(shape), axis=0).real


def schwarz_coeffs(u):
    """Taylor coefficients of the function analytic in the disc whose real
    part on the circle interpolates the samples ``u`` (axis 0)."""
    u = np.asarray(u)
    J = u.shape[0]
    c = np.fft.fft(u, axis=0) / J
    n = J // 2
    out = np.zeros((n + 1,) + u.shape[1:], dtype=complex)
    out[0] = c[0]
    out[1:n] = 2 * c[1:n]
    out[n] = c[n] if J % 2 == 0 else 2 * c[n]
    return out


def taylor_eval(coef, z, deriv=0):
    """Evaluate a power series (coefficients along axis 0) at points z."""
    z = np.asarray(z, dtype=complex)
    coef = np.asarray(coef)
    if deriv:
        n = np.arange(coef.shape[0])
        fac = np.ones(coef.shape[0])
        for d in range(deriv):
            fac = fac * (n - d)
        coef = (coef.T * fac).T[deriv:]
    zf = z.reshape(-1)
    acc = np.zeros((zf.size,) + coef.shape[1:], dtype=complex)
    zz = zf.reshape((-1,) + (1,) * (coef.ndim - 1))
    for a in coef[::-1]:
        acc = acc * zz + a
    return acc.reshape(z.shape + coef.shape[1:])


@dataclass(eq=False)
class ConformalMap:
    """gamma0(z) = z exp(H(z)) with Re H = log rho(psi(phi)) on the circle."""

    J: int
    phi: np.ndarray
    psi: np.ndarray  # boundary correspondence psi~(phi_k)
    rho: np.ndarray  # contour radius at psi~(phi_k)
    h: np.ndarray  # Taylor coefficients of H
    contour: object = None
    sweeps: int = 0
    residual: float = 0.0
    _cache: dict = field(default_factory=dict)

    def boundary(self):
        return self.rho * np.exp(1j * self.psi)

    def H(self, z, deriv=0):
        return taylor_eval(self.h, z, deriv)


def _nearly_circular(rho_fn, J):
    """First-order map for a nearly circular contour: psi = phi + K[log rho(phi)]."""
    phi = 2 * np.pi * np.arange(J) / J
    return phi + conjugate(np.log(rho_fn(phi)))


def solve_theodorsen(contour, J=1000, tol=1e-6, max_sweeps=500, rho_fn=None) -> ConformalMap:
    """Fixed-point iteration psi <- phi + K[log rho(psi)].

    ``contour`` needs a ``rho_of(theta)`` method (radius as a function of the
    polar angle); ``rho_fn`` overrides it.
    """
    rho_fn = rho_fn or contour.rho_of
    if J % 2:
        raise ConformalError("use an even number of nodes")
    phi = 2 * np.pi * np.arange(J) / J
    psi = phi.copy()
    change = np.inf
    for sweep in range(1, max_sweeps + 1):
        lr = np.log(rho_fn(psi))
        new = phi + conjugate(lr)
        omega = 0.5 if sweep <= 5 else 1.0
        new = psi + omega * (new - psi)
        change = float(np.max(np.abs(new - psi)))
        psi = new
        if not np.all(np.isfinite(psi)):
            raise ConformalError("Theodorsen iteration produced non-finite values")
        if change < tol:
            break
    else:
        raise ConformalError(f"Theodorsen iteration did not converge (last change {change:.3e})")
    if np.any(np.diff(psi) <= 0):
        raise ConformalError("boundary correspondence is not monotone")
    rho = rho_fn(psi)
    h = schwarz_coeffs(np.log(rho))
    h[0] = h[0].real
    mag = np.abs(h)
    keep = np.nonzero(mag > 1e-17 * mag.max())[0]
    h = h[:int(keep[-1]) + 1] if keep.size else h[:1]
    log.debug("theodorsen: J=%d sweeps=%d change=%.2e", J, sweep, change)
    return ConformalMap(J, phi, psi, rho, h, contour, sweep, change)


def gamma0_eval(cmap: ConformalMap, z):
    z = np.asarray(z, dtype=complex)
    if np.any(np.abs(z) > 1 + 1e-12):
        raise ConformalError("gamma0 is evaluated in the closed unit disc")
    return z * np.exp(cmap.H(z))


def gamma0_deriv(cmap: ConformalMap, z):
    z = np.asarray(z, dtype=complex)
    return np.exp(cmap.H(z)) * (1 + z * cmap.H(z, 1))


def gamma_inverse(cmap: ConformalMap, x, tol=1e-12, max_iter=60):
    """Solve gamma0(z) = x by Newton, seeded from the boundary correspondence."""
    x = np.atleast_1d(np.asarray(x, dtype=complex))
    out = np.zeros_like(x)
    nz = np.abs(x) > 0
    if not np.any(nz):
        return out
    xs = x[nz]
    th = np.mod(np.angle(xs), 2 * np.pi)
    # boundary correspondence inverse by periodic interpolation
    pp = np.concatenate([cmap.psi - 2 * np.pi, cmap.psi, cmap.psi + 2 * np.pi])
    ff = np.concatenate([cmap.phi - 2 * np.pi, cmap.phi, cmap.phi + 2 * np.pi])
    ph = np.interp(th, pp, ff)
    rb = np.interp(th, pp, np.concatenate([cmap.rho] * 3))
    if cmap.contour is not None and hasattr(cmap.contour, "rho_of"):
        rb = cmap.contour.rho_of(th)
    frac = np.abs(xs) / rb
    if np.any(frac >= 1):
        raise ConformalError("point is not strictly inside the contour")
    z = frac * np.exp(1j * ph)
    for _ in range(max_iter):
        f = gamma0_eval(cmap, z) - xs
        step = f / gamma0_deriv(cmap, z)
        # backtrack until the iterate stays inside the disc
        lam = np.ones(z.shape)
        for _ in range(30):
            out_ = np.abs(z - lam * step) >= 1
            if not np.any(out_):
                break
            lam = np.where(out_, 0.5 * lam, lam)
        z = z - lam * step
        if np.max(np.abs(step)) < tol * 1e-2:
            break
    res = np.abs(gamma0_eval(cmap, z) - xs)
    if np.any(res > max(tol, 1e-10) * max(1.0, np.abs(xs).max())):
        raise ConformalError(f"inverse map did not converge (residual {res.max():.2e})")
    out[nz] = z
    return out


def eta_and_derivative(cmap: ConformalMap):
    """eta = gamma(1) on the real segment and gamma'(1) = 1 / gamma0'(eta)."""
    if "eta" in cmap._cache:
        return cmap._cache["eta"]
    g1 = float(gamma0_eval(cmap, 1.0).real)
    if g1 < 1 - 1e-9:
        raise ConformalError("x = 1 is outside the contour")
    if abs(g1 - 1) <= 1e-9:
        eta = 1.0
    else:
        lo, hi = 0.0, 1.0
        eta = 0.5
        for _ in range(200):
            f = float(gamma0_eval(cmap, eta).real) - 1
            d = float(gamma0_deriv(cmap, eta).real)
            if f > 0:
                hi = eta
            else:
                lo = eta
            cand = eta - f / d if d > 0 else 0.5 * (lo + hi)
            if not (lo < cand < hi):
                cand = 0.5 * (lo + hi)
            if abs(cand - eta) < 1e-15:
                eta = cand
                break
            eta = cand
    dg = 1.0 / float(gamma0_deriv(cmap, eta).real)
    cmap._cache["eta"] = (eta, dg)
    return eta, dg
