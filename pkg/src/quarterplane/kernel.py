"""The kernel R(x, y) = xy - Psi(x, y) of the saturated region and the curves
built from its algebraic roots."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from .model import EXTENDED, OFF, ModelSpec


class KernelError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class KernelPoly:
    """Coefficients of the corner kernel.

    ``R[a, b]`` is the coefficient of x^a y^b in the polynomial kernel, scaled
    by (xy)^s with s = 1 (nearest neighbour) or s = 2 (extended).  The
    quadratic views hold increasing-power coefficients:
    R = ah(x) y^2 + bh(x) y + ch(x) = a(y) x^2 + b(y) x + c(y).
    """

    p: np.ndarray  # 4x4 corner cell
    R: np.ndarray
    shift: int
    ah: np.ndarray
    bh: np.ndarray
    ch: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def q(self, i, j):
        return self.p[i + OFF, j + OFF]

    def psi(self, x, y):
        x, y = np.asarray(x, dtype=complex), np.asarray(y, dtype=complex)
        s = self.shift
        return sum(self.q(i, j) * x ** (i + s) * y ** (j + s) for i in range(-2, 2) for j in range(-2, 2)
                   if self.q(i, j) != 0)

    def __call__(self, x, y):
        x, y = np.asarray(x, dtype=complex), np.asarray(y, dtype=complex)
        return P.polyval2d(x, y, self.R)

    @property
    def drifts(self):
        jj = np.arange(-2, 2)
        return float(jj @ self.p.sum(axis=1)), float(self.p.sum(axis=0) @ jj)

    def transposed(self):
        return kernel_from_cell(self.p.T, extended=self.shift == 2)

    # quadratic views
    def coef_y(self, x):
        return P.polyval(x, self.ah), P.polyval(x, self.bh), P.polyval(x, self.ch)

    def coef_x(self, y):
        return P.polyval(y, self.a), P.polyval(y, self.b), P.polyval(y, self.c)

    def disc_x(self):
        """D_Y(x) = bh^2 - 4 ah ch (increasing powers)."""
        return P.polysub(P.polymul(self.bh, self.bh), 4 * P.polymul(self.ah, self.ch))

    def disc_y(self):
        return P.polysub(P.polymul(self.b, self.b), 4 * P.polymul(self.a, self.c))


def kernel_from_cell(cell, extended=False) -> KernelPoly:
    cell = np.asarray(cell, dtype=float)
    s = 2 if extended else 1
    R = np.zeros((4, 4))
    R[s, s] += 1.0
    for i in range(-2, 2):
        for j in range(-2, 2):
            v = cell[i + OFF, j + OFF]
            if v:
                if i + s < 0 or j + s < 0:
                    raise KernelError("jump outside the kernel support")
                R[i + s, j + s] -= v
    if extended:
        z = np.zeros(3)
        return KernelPoly(cell, R, s, z, z, z, z, z, z)
    q = lambda i, j: cell[i + OFF, j + OFF]  # noqa: E731
    ah = -np.array([q(-1, 1), q(0, 1), q(1, 1)])
    bh = np.array([-q(-1, 0), 1 - q(0, 0), -q(1, 0)])
    ch = -np.array([q(-1, -1), q(0, -1), q(1, -1)])
    a = -np.array([q(1, -1), q(1, 0), q(1, 1)])
    b = np.array([-q(0, -1), 1 - q(0, 0), -q(0, 1)])
    c = -np.array([q(-1, -1), q(-1, 0), q(-1, 1)])
    return KernelPoly(cell, R, s, ah, bh, ch, a, b, c)


def kernel_coeffs(spec: ModelSpec) -> KernelPoly:
    return kernel_from_cell(spec.corner, extended=spec.mode == EXTENDED)


# ---------------------------------------------------------------- branch points

@dataclass(frozen=True)
class BranchPoints:
    x: tuple  # x1 <= x2 < 1 < x3, x4 (x4 may be negative or infinite)
    y: tuple
    case_x: str
    case_y: str


def _polish(coef, r, steps=4):
    d = P.polyder(coef)
    for _ in range(steps):
        fd = P.polyval(r, d)
        if fd == 0:
            break
        r = r - P.polyval(r, coef) / fd
    return r


def _quartic_roots(coef):
    coef = np.trim_zeros(np.asarray(coef, dtype=float), "b")
    if not len(coef):
        raise KernelError("discriminant vanishes identically (degenerate kernel)")
    scale = np.abs(coef).max()
    if len(coef) and abs(coef[-1]) < 1e-14 * scale:
        coef = coef.copy()
        coef[-1] = 0.0
        coef = np.trim_zeros(coef, "b")
    if len(coef) < 2:
        return np.array([])
    r = np.roots(coef[::-1]).astype(complex)
    return np.array([_polish(coef, z) for z in r])


def _classify(roots, p10, p11, p1m1, tag):
    r = np.asarray(roots)
    if np.any(np.abs(r.imag) > 1e-8 * np.maximum(1, np.abs(r))):
        raise KernelError(f"complex branch points {r} for the {tag} discriminant")
    r = np.sort(r.real)
    inner = r[np.abs(r) < 1]
    outer = r[np.abs(r) >= 1]
    if len(inner) != 2 or inner[1] <= 0:
        raise KernelError(f"expected two branch points in (-1,1), got {r}")
    # A (-1,-1) jump can push the lower point to <= 0.  The cut then holds
    # the origin and the opposite contour passes through a zero of the
    # constant coefficient, i.e. through a pole of the boundary condition.
    if inner[0] <= 0:
        raise KernelError(f"cut [{inner[0]:.3g}, {inner[1]:.3g}] of the {tag} discriminant "
                          "contains 0; the contour meets a pole of the boundary condition")
    if abs(inner[1] - inner[0]) < 1e-12:
        raise KernelError("repeated interior branch points (degenerate kernel)")
    pos = np.sort(outer[outer > 1])
    neg = outer[outer < -1]
    t = 2 * np.sqrt(p11 * p1m1)
    if np.isclose(p10, t, rtol=0, atol=1e-14) or len(outer) == 1:
        case = "equal"
        x3 = pos[0] if len(pos) else np.inf
        x4 = np.inf
    elif p10 > t:
        case = "greater"
        if len(pos) != 2:
            raise KernelError(f"branch points {r} violate the expected interleaving")
        x3, x4 = pos
    else:
        case = "less"
        if len(pos) != 1 or len(neg) != 1:
            raise KernelError(f"branch points {r} violate the expected interleaving")
        x3, x4 = pos[0], neg[0]
    return (float(inner[0]), float(inner[1]), float(x3), float(x4)), case


def branch_points(kp: KernelPoly) -> BranchPoints:
    if kp.shift != 1:
        raise KernelError("branch points are defined for nearest-neighbour kernels")
    q = kp.q
    dx = kp.disc_x()
    dy = kp.disc_y()
    xs, cx = _classify(_quartic_roots(dx), q(1, 0), q(1, 1), q(1, -1), "x")
    ys, cy = _classify(_quartic_roots(dy), q(0, 1), q(1, 1), q(-1, 1), "y")
    return BranchPoints(xs, ys, cx, cy)


# ---------------------------------------------------------------- algebraic roots

def _small_root(A, B, C, prev=None):
    A, B, C = (np.asarray(v, dtype=complex) for v in (A, B, C))
    A, B, C = np.broadcast_arrays(A, B, C)
    out = np.empty(A.shape, dtype=complex)
    lin = np.abs(A) < 1e-300
    with np.errstate(all="ignore"):
        sq = np.sqrt(B * B - 4 * A * C)
        # stable pair of roots
        sgn = np.where((np.conj(B) * sq).real >= 0, 1.0, -1.0)
        qq = -0.5 * (B + sgn * sq)
        r1 = qq / A
        r2 = C / qq
    r2 = np.where(qq == 0, 0.0, r2)
    pick = np.where(np.abs(r1) <= np.abs(r2), r1, r2)
    if prev is not None:
        tie = np.isclose(np.abs(r1), np.abs(r2), rtol=1e-12, atol=0)
        near = np.where(np.abs(r1 - prev) <= np.abs(r2 - prev), r1, r2)
        pick = np.where(tie, near, pick)
    out[...] = pick
    if np.any(lin):
        out[lin] = -C[lin] / B[lin]
    return out


def root_X0(kp: KernelPoly, y, prev=None):
    """Smallest-modulus root in x of R(x, y) = 0."""
    return _small_root(*kp.coef_x(np.asarray(y, dtype=complex)), prev=prev)


def root_Y0(kp: KernelPoly, x, prev=None):
    return _small_root(*kp.coef_y(np.asarray(x, dtype=complex)), prev=prev)


def both_roots_x(kp, y):
    A, B, C = kp.coef_x(np.asarray(y, dtype=complex))
    sq = np.sqrt(B * B - 4 * A * C)
    return (-B + sq) / (2 * A), (-B - sq) / (2 * A)


# ---------------------------------------------------------------- contours

class ContourError(KernelError):
    pass


@dataclass(eq=False)
class PolarContour:
    """Closed curve traced by the small root along the cut [y1, y2], symmetric in
    the real axis and star-shaped about 0."""

    kp: KernelPoly
    y1: float
    y2: float
    beta0: float  # right extreme point
    beta1: float  # left extreme point
    y_right: float  # cut end mapped to beta0
    phi: np.ndarray
    rho: np.ndarray

    def upper(self, y):
        """Point of the upper edge over the cut abscissa y (real)."""
        A, B, C = self.kp.coef_x(np.asarray(y, dtype=float))
        D = B * B - 4 * A * C
        x = (-B + 1j * np.sqrt(np.maximum(-D, 0.0))) / (2 * A)
        # +0j keeps the left end at angle pi rather than -pi
        return x.real + 1j * np.abs(x.imag)

    def y_of_angle(self, theta, iters=80):
        """Cut abscissa whose upper-edge point has argument theta in [0, pi]."""
        th = np.clip(np.asarray(theta, dtype=float), 0.0, np.pi)
        lo = np.full(th.shape, self.y_right)
        hi = np.full(th.shape, self.y1 if self.y_right == self.y2 else self.y2)
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            ang = np.angle(self.upper(mid))
            go = ang < th
            lo = np.where(go, mid, lo)
            hi = np.where(go, hi, mid)
        return 0.5 * (lo + hi)

    def rho_of(self, theta):
        """Radius of the contour in direction theta (any real angle)."""
        t = np.mod(np.asarray(theta, dtype=float), 2 * np.pi)
        t = np.where(t > np.pi, 2 * np.pi - t, t)
        y = self.y_of_angle(t)
        return np.abs(self.upper(y))

    def m_of_re(self, d):
        """|x|^2 as a function of Re x along the contour."""
        q = self.kp.q
        d = np.atleast_1d(np.asarray(d, dtype=float))
        out = np.empty_like(d)
        for k, dk in enumerate(d):
            co = [-(q(0, -1) + 2 * dk * q(1, -1)), 1 - q(0, 0) - 2 * dk * q(1, 0), -(q(0, 1) + 2 * dk * q(1, 1))]
            rts = np.roots(co[::-1]) if abs(co[2]) > 0 else np.array([-co[0] / co[1]])
            rts = rts[np.abs(rts.imag) < 1e-9].real
            lo, hi = self.y1 - 1e-9, self.y2 + 1e-9
            inside = rts[(rts >= lo) & (rts <= hi)]
            if len(inside) != 1:
                raise ContourError(f"Re x = {dk} is not attained exactly once on the contour")
            y = np.clip(inside[0], self.y1, self.y2)
            A, _, C = self.kp.coef_x(y)
            out[k] = (C / A).real
        return out

    def points(self):
        return self.rho * np.exp(1j * self.phi)

    def cut_samples(self, n=512):
        """Upper-edge points at Chebyshev-spaced cut abscissae (with the abscissae)."""
        t = np.cos(np.pi * np.arange(n) / (n - 1))
        y = 0.5 * (self.y1 + self.y2) + 0.5 * (self.y2 - self.y1) * t
        return y, self.upper(y)

    def contains(self, x):
        x = np.asarray(x, dtype=complex)
        r = np.abs(x)
        return r < self.rho_of(np.angle(x))


def contour_M(kp: KernelPoly, num_points=1024, bp: BranchPoints | None = None) -> PolarContour:
    bp = bp or branch_points(kp)
    y1, y2 = bp.y[0], bp.y[1]
    A1, B1, _ = kp.coef_x(y1)
    A2, B2, _ = kp.coef_x(y2)
    e1, e2 = -B1 / (2 * A1), -B2 / (2 * A2)
    if not (min(e1, e2) < 0 < max(e1, e2)):
        raise ContourError("the contour does not surround the origin")
    y_right = y2 if e2 > 0 else y1
    # extreme points from |x|^2 = c/a at the cut ends
    beta0 = float(np.sqrt((kp.coef_x(y_right)[2] / kp.coef_x(y_right)[0]).real))
    y_left = y1 if y_right == y2 else y2
    beta1 = -float(np.sqrt((kp.coef_x(y_left)[2] / kp.coef_x(y_left)[0]).real))
    ct = PolarContour(kp, y1, y2, beta0, beta1, y_right, np.zeros(0), np.zeros(0))
    # star-shape check along a fine cut sampling
    ys, xs = ct.cut_samples(4001)
    ang = np.angle(xs)
    if y_right == y1:
        ang = ang[::-1]
    if np.any(np.diff(ang) < -1e-12) or np.any(xs.imag < -1e-12):
        raise ContourError("contour is not star-shaped about 0 (unsupported geometry)")
    phi = 2 * np.pi * np.arange(num_points) / num_points
    ct.phi = phi
    ct.rho = ct.rho_of(phi)
    return ct


def contour_L(kp: KernelPoly, num_points=1024, bp: BranchPoints | None = None) -> PolarContour:
    kt = kp.transposed()
    bt = None
    if bp is not None:
        bt = BranchPoints(bp.y, bp.x, bp.case_y, bp.case_x)
    return contour_M(kt, num_points, bt)


# ---------------------------------------------------------------- symmetric zeros

def _sym_poly(kp, s):
    """Coefficients (increasing) of g -> R(g s, g / s)."""
    co = np.zeros(5, dtype=complex)
    co[2] += 1.0
    for i in range(-1, 2):
        for j in range(-1, 2):
            v = kp.q(i, j)
            if v:
                co[i + j + 2] -= v * s ** (i - j)
    return co


def symmetric_zeros(kp: KernelPoly, s, prev=None):
    """Zeros of R(g s, g/s) in the closed unit disc: (g(s), other zero)."""
    co = np.trim_zeros(_sym_poly(kp, complex(s)), "b")
    r = np.roots(co[::-1])
    r = np.array([_polish(co, z) for z in r])
    inside = r[np.abs(r) <= 1 + 1e-9]
    if len(inside) == 0:
        raise KernelError(f"no zero in the closed disc at s={s}")
    nz = inside[np.abs(inside) > 1e-12]
    pool = nz if len(nz) else inside
    if prev is None:
        g = pool[np.argmax(np.abs(pool))]
    else:
        g = pool[np.argmin(np.abs(pool - prev))]
    rest = inside[np.abs(inside - g) > 1e-14]
    other = rest[0] if len(rest) else g
    return complex(g), complex(other)


def contours_S1_S2(kp: KernelPoly, num_points=720):
    phi = 2 * np.pi * np.arange(num_points) / num_points
    gs = np.empty(num_points, dtype=complex)
    prev = 1.0
    for k, f in enumerate(phi):
        gs[k], _ = symmetric_zeros(kp, np.exp(1j * f), prev)
        prev = gs[k]
    return gs * np.exp(1j * phi), gs * np.exp(-1j * phi), gs
