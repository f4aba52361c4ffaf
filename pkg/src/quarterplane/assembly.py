"""Matrix functional equations of the half-saturated regions and the
functional equation R g = A g0 + B h0 + C of the saturated corner.

All quantities that depend on the corner probabilities are affine arrays
(see :mod:`quarterplane.affine`) over the unknown vector
u[n1 * (N2 + 1) + n2] = pi(n1, n2), 0 <= n1 <= N1, 0 <= n2 <= N2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from .model import EXTENDED, OFF, ModelSpec


class PoleError(ZeroDivisionError):
    pass


def n_unknowns(spec):
    return (spec.N1 + 1) * (spec.N2 + 1)


def uidx(spec, n1, n2):
    return n1 * (spec.N2 + 1) + n2


def transpose_perm(spec):
    """perm[k_T] = k, mapping unknowns of the transposed walk to ours."""
    perm = np.empty(n_unknowns(spec), dtype=int)
    for n1 in range(spec.N1 + 1):
        for n2 in range(spec.N2 + 1):
            perm[n2 * (spec.N1 + 1) + n1] = uidx(spec, n1, n2)
    return perm


def permute_affine(arr, perm):
    out = np.zeros_like(arr)
    out[..., 0] = arr[..., 0]
    out[..., 1 + perm] = arr[..., 1:]
    return out


def band_polys(spec: ModelSpec):
    """Band polynomials of the row equations for the columns n1 >= N1.

    Returns F[j][c]: increasing-power coefficients at cell (N1, c) for the
    neighbour g_{n2-j}, scaled by x^s (s = 1 nearest neighbour, 2 extended),
    with F[0] carrying the x^s - sum_i p_{i,0} x^{i+s} diagonal term.  In the
    nearest-neighbour case F[1] = f1, F[0] = f2, F[-1] = f3.
    """
    s = 2 if spec.mode == EXTENDED else 1
    js = (1, 0, -1, -2) if s == 2 else (1, 0, -1)
    out = {}
    for j in js:
        rows = []
        for c in range(spec.N2 + 1):
            co = np.zeros(s + 2)
            for i in range(-s, 2):
                co[i + s] += spec.p(spec.N1, c, i, j)
            if j == 0:
                co = -co
                co[s] += 1.0
            rows.append(co)
        out[j] = np.array(rows)
    return out


def f_polys(spec):
    F = band_polys(spec)
    return F[1], F[0], F[-1]


def build_K_matrix(spec: ModelSpec, x):
    """Matrix of the S_b row equations in the unknowns g_1..g_N2."""
    F = band_polys(spec)
    N2 = spec.N2
    K = np.zeros((N2, N2), dtype=complex)
    for i in range(1, N2 + 1):  # row i <-> equation n2 = i - 1
        K[i - 1, i - 1] = -P.polyval(x, F[-1][i])
        if i >= 2:
            K[i - 1, i - 2] = P.polyval(x, F[0][i - 1])
        if i >= 3:
            K[i - 1, i - 3] = -P.polyval(x, F[1][i - 2])
        if spec.mode == EXTENDED and i + 1 <= N2:
            K[i - 1, i] = -P.polyval(x, F[-2][i + 1])
    return K


def build_M_matrix(spec: ModelSpec, y):
    return build_K_matrix(spec.transposed(), y)


def b_vectors(spec: ModelSpec):
    """b_{n2}(x) = x B1[n2] + B0[n2] as affine arrays, n2 = 0..N2-1."""
    N1, N2 = spec.N1, spec.N2
    nu = n_unknowns(spec)
    B0 = np.zeros((N2, 1 + nu))
    B1 = np.zeros((N2, 1 + nu))
    p = spec.p
    for n in range(N2):
        if n >= 1:
            B1[n, 1 + uidx(spec, N1 - 1, n - 1)] += p(N1 - 1, n - 1, 1, 1)
            B0[n, 1 + uidx(spec, N1, n - 1)] -= p(N1, n - 1, -1, 1)
        B1[n, 1 + uidx(spec, N1 - 1, n + 1)] += p(N1 - 1, n + 1, 1, -1)
        B1[n, 1 + uidx(spec, N1 - 1, n)] += p(N1 - 1, n, 1, 0)
        B0[n, 1 + uidx(spec, N1, n)] -= p(N1, n, -1, 0)
        B0[n, 1 + uidx(spec, N1, n + 1)] -= p(N1, n + 1, -1, -1)
    return B0, B1


class CramerComponents:
    """g_{n2}(x) = e_{n2}(x) g0(x) + t_{n2}(x) for n2 = 0..N2 (e_0 = 1, t_0 = 0),
    obtained by forward substitution in the lower triangular system."""

    def __init__(self, spec: ModelSpec):
        if spec.mode == EXTENDED:
            raise NotImplementedError("Cramer components are built for nearest-neighbour walks")
        self.spec = spec
        self.f1, self.f2, self.f3 = f_polys(spec)
        self.B0, self.B1 = b_vectors(spec)
        self.nu = n_unknowns(spec)

    def __call__(self, x):
        """Return (e, t) with shapes x.shape + (N2+1,) and x.shape + (N2+1, 1+nu)."""
        x = np.asarray(x, dtype=complex)
        N2 = self.spec.N2
        e = np.zeros(x.shape + (N2 + 1,), dtype=complex)
        t = np.zeros(x.shape + (N2 + 1, 1 + self.nu), dtype=complex)
        e[..., 0] = 1.0
        for k in range(N2):
            d = P.polyval(x, self.f3[k + 1])
            if np.any(np.abs(d) < 1e-300):
                raise PoleError(f"evaluation at a pole of g_{k + 1}")
            f2 = P.polyval(x, self.f2[k])
            num_e = f2 * e[..., k]
            num_t = f2[..., None] * t[..., k, :] - (x[..., None] * self.B1[k] + self.B0[k])
            if k >= 1:
                f1 = P.polyval(x, self.f1[k - 1])
                num_e = num_e - f1 * e[..., k - 1]
                num_t = num_t - f1[..., None] * t[..., k - 1, :]
            e[..., k + 1] = num_e / d
            t[..., k + 1, :] = num_t / d[..., None]
        return e, t


class FunctionalCoeffs:
    """A(x, y), B(x, y), C(x, y) of R(x,y) g(x,y) = A g0(x) + B h0(y) + C."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.nu = n_unknowns(spec)
        self.gx = CramerComponents(spec)
        self.tspec = spec.transposed()
        self.gy = CramerComponents(self.tspec)
        self.perm = transpose_perm(spec)
        N1, N2 = spec.N1, spec.N2
        p = spec.p
        # pieces of the constant term (coefficients of 1, x, y, xy)
        k = np.zeros((4, 1 + self.nu))
        k[3, 1 + uidx(spec, N1 - 1, N2 - 1)] = p(N1 - 1, N2 - 1, 1, 1)
        k[1, 1 + uidx(spec, N1 - 1, N2)] = -p(N1 - 1, N2, 1, -1)
        k[2, 1 + uidx(spec, N1, N2 - 1)] = -p(N1, N2 - 1, -1, 1)
        k[0, 1 + uidx(spec, N1, N2)] = p(N1, N2, -1, -1)
        self.kterm = k

    def _side(self, comp, x, y):
        """(coefficient of the boundary function, affine rest) for one side."""
        N2 = comp.spec.N2
        e, t = comp(x)
        f1 = P.polyval(x, comp.f1[N2 - 1])
        f3 = P.polyval(x, comp.f3[N2])
        a = y * f1 * e[..., N2 - 1] - f3 * e[..., N2]
        c = (y * f1)[..., None] * t[..., N2 - 1, :] - f3[..., None] * t[..., N2, :]
        return a, c

    def x_side(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=complex), np.asarray(y, dtype=complex))
        return self._side(self.gx, x, y)

    def y_side(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=complex), np.asarray(y, dtype=complex))
        b, c = self._side(self.gy, y, x)
        return b, permute_affine(c, self.perm)

    def K(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=complex), np.asarray(y, dtype=complex))
        k = self.kterm
        return (k[0] + x[..., None] * k[1] + y[..., None] * k[2] + (x * y)[..., None] * k[3])

    def A(self, x, y):
        return self.x_side(x, y)[0]

    def B(self, x, y):
        return self.y_side(x, y)[0]

    def C(self, x, y):
        return self.x_side(x, y)[1] + self.y_side(x, y)[1] + self.K(x, y)

    def all(self, x, y):
        a, cx = self.x_side(x, y)
        b, cy = self.y_side(x, y)
        return a, b, cx + cy + self.K(x, y)


def cramer_components(spec):
    return CramerComponents(spec)


def functional_coeffs(spec, components=None):
    return FunctionalCoeffs(spec)


def __getattr__(name):
    # the corner system lives with the solver; re-exported here lazily to
    # avoid a circular import
    if name in ("corner_linear_system", "evaluate_joint_pgf", "StationarySolution"):
        from . import solver
        return getattr(solver, name)
    raise AttributeError(name)
