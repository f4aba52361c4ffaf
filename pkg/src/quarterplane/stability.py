"""Ergodicity of the walk from the corner drifts and the laws of the induced
one-dimensional chains."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import EXTENDED, JUMPS, OFF, ModelError, ModelSpec

ERGODIC, TRANSIENT, INCONCLUSIVE = "ergodic", "transient", "inconclusive"


class StabilityError(RuntimeError):
    pass


@dataclass(frozen=True)
class DriftVector:
    Ex: float
    Ey: float
    Ex_rows: np.ndarray  # E_x^(n2) for n2 = 0..N2 (constant from N2 on)
    Ey_cols: np.ndarray  # E_y^(n1) for n1 = 0..N1


def _jump_means(cell):
    jj = np.array(JUMPS, dtype=float)
    return float(jj @ cell.sum(axis=1)), float(cell.sum(axis=0) @ jj)


def mean_drifts(spec: ModelSpec) -> DriftVector:
    rows = np.array([_jump_means(spec.cell(spec.N1, k))[0] for k in range(spec.N2 + 1)])
    cols = np.array([_jump_means(spec.cell(k, spec.N2))[1] for k in range(spec.N1 + 1)])
    Ex, Ey = _jump_means(spec.corner)
    return DriftVector(Ex, Ey, rows, cols)


@dataclass
class InducedDistribution:
    """psi_n for n < len(head), then psi_n = head[-1] * ratio ** (n - len(head) + 1)."""

    head: np.ndarray
    ratio: float
    method: str = "closed-form"

    def pmf(self, n):
        n = np.asarray(n)
        L = len(self.head) - 1
        tail = self.head[-1] * self.ratio ** np.maximum(n - L, 0)
        return np.where(n <= L, self.head[np.minimum(n, L)], tail)

    def head_mass(self, k):
        """sum_{n < k} psi_n."""
        return float(self.pmf(np.arange(k)).sum())

    def total(self):
        r = self.ratio
        return float(self.head[:-1].sum() + self.head[-1] / (1 - r))

    def mean_of(self, values):
        """sum_n psi_n v_n where v is constant from index len(values) - 1 on."""
        v = np.asarray(values, dtype=float)
        k = len(v) - 1
        return float(self.pmf(np.arange(k)) @ v[:k] + v[k] * (1 - self.head_mass(k)))


def birth_death_stationary(up, down, tol=1e-300) -> InducedDistribution:
    """Closed form for a birth-death chain whose rates are constant from the last
    listed level on: psi_n = psi_0 prod_{j<n} up_j / down_{j+1}, geometric tail
    with ratio up[-1] / down[-1]."""
    up = np.asarray(up, dtype=float)
    down = np.asarray(down, dtype=float)
    L = len(up) - 1
    if down[-1] <= tol or up[-1] >= down[-1]:
        raise StabilityError("induced chain is not ergodic (normalizer diverges)")
    prod = np.ones(L + 1)
    for n in range(1, L + 1):
        if down[n] <= tol:
            if up[n - 1] > tol:
                raise StabilityError(f"level {n} cannot be left downwards")
            prod[n] = 0.0
        else:
            prod[n] = prod[n - 1] * up[n - 1] / down[n]
    r = up[-1] / down[-1]
    psi0 = 1.0 / (prod[:-1].sum() + prod[-1] / (1 - r))
    return InducedDistribution(psi0 * prod, float(r))


def _line_cells(spec, axis):
    """Cells along which coordinate ``axis`` moves while the other one is saturated."""
    if axis == 1:
        return [spec.cell(spec.N1, k) for k in range(spec.N2 + 1)], 1
    return [spec.cell(k, spec.N2) for k in range(spec.N1 + 1)], 0


def _step_law(cells, axis):
    """Per-level probabilities of the moving coordinate's jumps (-2..1)."""
    out = []
    for c in cells:
        out.append(c.sum(axis=0) if axis == 1 else c.sum(axis=1))
    return np.array(out)


def _truncated_line(law, tail_tol=1e-15, L0=64, Lmax=1 << 16):
    """Stationary law of a skip-free-upwards chain on 0, 1, ... by a truncated
    balance solve (used for jumps down by two)."""
    from .oracle import gth_dense

    N = law.shape[0] - 1
    drift = float(np.array(JUMPS) @ law[-1])
    if drift >= 0:
        raise StabilityError("induced chain is not ergodic (nonnegative drift)")
    L = max(L0, 4 * N)
    while True:
        P = np.zeros((L + 1, L + 1))
        for n in range(L + 1):
            w = law[min(n, N)]
            for j, pj in zip(JUMPS, w):
                P[n, min(max(n + j, 0), L)] += pj
        pi = gth_dense(P)
        if pi[-1] < tail_tol or L >= Lmax:
            break
        L *= 2
    k = int(np.nonzero(pi > 0)[0].max()) if np.any(pi > 0) else 0
    k = min(k, L)
    r = pi[k] / pi[k - 1] if k > N + 1 and pi[k - 1] > 0 else 0.0
    return InducedDistribution(pi[:k + 1], float(min(r, 1 - 1e-15)), "truncated")


def induced_chain_stationary(spec: ModelSpec, axis=1) -> InducedDistribution:
    """Law of coordinate ``axis`` while the other coordinate sits above its level
    (axis 1: psi, the second coordinate; axis 0: phi, the first one)."""
    cells, ax = _line_cells(spec, axis)
    law = _step_law(cells, ax)
    if spec.mode == EXTENDED and np.any(law[:, 0] > 0):
        return _truncated_line(law)
    return birth_death_stationary(law[:, OFF + 1], law[:, OFF - 1])


@dataclass
class StabilityReport:
    classification: str
    case: int  # drift-sign case 1..4: (Ex<0,Ey<0), (Ex>=0,Ey<0), (Ex<0,Ey>=0), both >= 0
    rho1: float | None
    rho2: float | None
    drifts: DriftVector
    psi: InducedDistribution | None = None
    phi: InducedDistribution | None = None
    reason: str = ""

    def as_dict(self):
        d = self.drifts
        return {"classification": self.classification, "case": self.case, "rho1": self.rho1,
                "rho2": self.rho2, "Ex": d.Ex, "Ey": d.Ey, "Ex_rows": d.Ex_rows.tolist(),
                "Ey_cols": d.Ey_cols.tolist(), "reason": self.reason,
                "psi_head": None if self.psi is None else self.psi.head.tolist(),
                "psi_ratio": None if self.psi is None else self.psi.ratio,
                "phi_head": None if self.phi is None else self.phi.head.tolist(),
                "phi_ratio": None if self.phi is None else self.phi.ratio}


def classify_stability(spec: ModelSpec, zero_tol=1e-13) -> StabilityReport:
    """Case table on the corner drifts and rho_k = sum_n psi_n E^(n)."""
    d = mean_drifts(spec)
    Ex, Ey = d.Ex, d.Ey
    psi = induced_chain_stationary(spec, 1) if Ey < 0 else None
    phi = induced_chain_stationary(spec, 0) if Ex < 0 else None
    rho1 = psi.mean_of(d.Ex_rows) if psi is not None else None
    rho2 = phi.mean_of(d.Ey_cols) if phi is not None else None

    def sign(v):
        return 0 if abs(v) <= zero_tol else (1 if v > 0 else -1)

    if Ex >= 0 and Ey >= 0:
        return StabilityReport(TRANSIENT, 4, rho1, rho2, d, psi, phi, "both corner drifts nonnegative")
    if Ex < 0 and Ey < 0:
        s1, s2 = sign(rho1), sign(rho2)
        if s1 < 0 and s2 < 0:
            cls, why = ERGODIC, "rho1 < 0 and rho2 < 0"
        elif s1 > 0 or s2 > 0:
            cls, why = TRANSIENT, "rho1 > 0 or rho2 > 0"
        else:
            cls, why = INCONCLUSIVE, "a rho vanishes"
        return StabilityReport(cls, 1, rho1, rho2, d, psi, phi, why)
    if Ex >= 0:  # Ey < 0
        s, E, case, nm = sign(rho1), Ex, 2, "rho1"
    else:  # Ex < 0 <= Ey
        s, E, case, nm = sign(rho2), Ey, 3, "rho2"
    if s < 0:
        cls, why = ERGODIC, f"{nm} < 0"
    elif s > 0:
        cls, why = TRANSIENT, f"{nm} > 0"
    elif E > 0:
        cls, why = TRANSIENT, f"{nm} = 0 with positive drift"
    else:
        cls, why = INCONCLUSIVE, f"{nm} = 0 with zero drift"
    return StabilityReport(cls, case, rho1, rho2, d, psi, phi, why)


# ---------------------------------------------------------------- random access

@dataclass
class RAConditions:
    h1: float | None
    h2: float | None
    gamma: np.ndarray
    delta: np.ndarray
    classification: str


def _ra_tables(spec):
    rates = spec.meta.get("rates")
    if rates is None:
        raise ModelError("model carries no random-access rate tables")
    return [np.asarray(rates[k], dtype=float) for k in ("lam1", "lam2", "a1", "a2")]


def ra_conditions(spec: ModelSpec, zero_tol=1e-13) -> RAConditions:
    """Random-access stability margins from the per-cell rates alone:

    h1 = (lam1 - a1 abar2)(1 - sum_{k<N2} psi_k) + sum_{k<N2} gamma_k psi_k with
    gamma_k = lam1(N1, k) - a1(N1, k) abar2(N1, k) and psi the law of the
    birth-death chain with up = lam2 (1 - abar1 a2), down = lambar2 abar1 a2;
    h2 mirrors it.  The queues are ergodic iff the applicable margins are
    negative.
    """
    l1, l2, a1, a2 = _ra_tables(spec)
    N1, N2 = spec.N1, spec.N2

    def margin(lam_x, a_x, lam_y, a_y, line):
        # line(t) picks the cell at level t of the moving coordinate
        n = len(line)
        lx = np.array([lam_x[c] for c in line])
        ax = np.array([a_x[c] for c in line])
        ly = np.array([lam_y[c] for c in line])
        ay = np.array([a_y[c] for c in line])
        corr = lx - ax * (1 - ay)
        E = corr[-1]
        up = ly * (1 - (1 - ax) * ay)
        down = (1 - ly) * (1 - ax) * ay
        try:
            psi = birth_death_stationary(up, down)
        except StabilityError:
            return None, corr[:-1], E
        k = n - 1
        head = psi.pmf(np.arange(k))
        h = E * (1 - head.sum()) + corr[:k] @ head
        return float(h), corr[:-1], E

    h1, gamma, Ex = margin(l1, a1, l2, a2, [(N1, k) for k in range(N2 + 1)])
    h2, delta, Ey = margin(l2, a2, l1, a1, [(k, N2) for k in range(N1 + 1)])

    def neg(h):
        return h is not None and h < -zero_tol

    def pos(h):
        return h is not None and h > zero_tol

    if Ex >= 0 and Ey >= 0:
        cls = TRANSIENT
    elif Ex < 0 and Ey < 0:
        cls = ERGODIC if neg(h1) and neg(h2) else TRANSIENT if pos(h1) or pos(h2) else INCONCLUSIVE
    else:
        h, E = (h1, Ex) if Ex >= 0 else (h2, Ey)
        if neg(h):
            cls = ERGODIC
        elif pos(h) or (h is not None and E > 0):
            cls = TRANSIENT
        else:
            cls = INCONCLUSIVE
    return RAConditions(h1, h2, gamma, delta, cls)


@dataclass
class RegionScan:
    caps1: np.ndarray
    caps2: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    classes: np.ndarray  # str, shape (len(caps1), len(caps2))
    near_boundary: np.ndarray  # bool: a point within ``margin`` has the other class
    convexity: dict = field(default_factory=dict)

    def rows(self):
        for i, c1 in enumerate(self.caps1):
            for j, c2 in enumerate(self.caps2):
                yield {"lambda1_cap": float(c1), "lambda2_cap": float(c2),
                       "h1": _num(self.h1[i, j]), "h2": _num(self.h2[i, j]),
                       "class": str(self.classes[i, j]), "near_boundary": bool(self.near_boundary[i, j])}


def _num(v):
    return "" if v is None or not np.isfinite(v) else float(v)


def convexity_report(points, inside):
    """Convex hull of the ergodic samples and the transient samples it contains.
    The region is only reported, never asserted, to be convex."""
    from scipy.spatial import ConvexHull, Delaunay

    pts = np.asarray(points, dtype=float)
    ins = np.asarray(inside, dtype=bool)
    ok = pts[ins]
    if len(ok) < 3:
        return {"hull_points": int(len(ok)), "transient_inside_hull": 0, "consistent_with_convex": True}
    try:
        hull = ConvexHull(ok)
        tri = Delaunay(ok[hull.vertices])
    except Exception as exc:  # degenerate (collinear) sample
        return {"hull_points": int(len(ok)), "error": str(exc), "consistent_with_convex": True}
    bad = int(np.sum(tri.find_simplex(pts[~ins]) >= 0))
    return {"hull_points": int(len(ok)), "hull_vertices": int(len(hull.vertices)),
            "transient_inside_hull": bad, "consistent_with_convex": bad == 0}


def ra_stability_region(build, caps1, caps2, margin=0.02, ring=16) -> RegionScan:
    """Classify every (cap1, cap2) of the grid with ``build(cap1, cap2)`` -> ModelSpec.

    A point counts as near the boundary when some point at distance ``margin``
    (sampled on a ring) falls in the other class.
    """
    caps1 = np.asarray(caps1, dtype=float)
    caps2 = np.asarray(caps2, dtype=float)
    n1, n2 = len(caps1), len(caps2)
    H1 = np.full((n1, n2), np.nan)
    H2 = np.full((n1, n2), np.nan)
    C = np.empty((n1, n2), dtype=object)
    near = np.zeros((n1, n2), dtype=bool)
    th = 2 * np.pi * np.arange(ring) / ring

    def cls_at(c1, c2):
        if not (0 < c1 < 1 and 0 < c2 < 1):
            return None
        return ra_conditions(build(c1, c2)).classification

    for i, c1 in enumerate(caps1):
        for j, c2 in enumerate(caps2):
            rc = ra_conditions(build(c1, c2))
            H1[i, j] = np.nan if rc.h1 is None else rc.h1
            H2[i, j] = np.nan if rc.h2 is None else rc.h2
            C[i, j] = rc.classification
            for t in th:
                other = cls_at(c1 + margin * np.cos(t), c2 + margin * np.sin(t))
                if other is not None and other != rc.classification:
                    near[i, j] = True
                    break
    P = np.array([(a, b) for a in caps1 for b in caps2])
    conv = convexity_report(P, (C == ERGODIC).reshape(-1))
    return RegionScan(caps1, caps2, H1, H2, C, near, conv)


def simulated_classes(build, caps1, caps2, horizon=10 ** 7, seed=0, slope_tol=None):
    """Growth flags from one simulated trajectory per grid point (streams
    split by grid index)."""
    from .oracle import simulate

    out = np.empty((len(caps1), len(caps2)), dtype=object)
    for i, c1 in enumerate(caps1):
        for j, c2 in enumerate(caps2):
            res = simulate(build(c1, c2), horizon, seed, window=(1, 1),
                           stream=i * len(caps2) + j, slope_tol=slope_tol)
            out[i, j] = TRANSIENT if res.growing else ERGODIC
    return out


def agreement(scan: RegionScan, simulated):
    """Fraction of conclusive grid points away from the boundary where the
    analytic class matches the simulated one."""
    mask = ~scan.near_boundary & (scan.classes != INCONCLUSIVE)
    n = int(mask.sum())
    hits = int(np.sum(scan.classes[mask] == simulated[mask]))
    return {"points": n, "agree": hits, "fraction": hits / n if n else float("nan")}
