"""Partially homogeneous transition kernels on the quarter plane.

A walk is described by a grid of jump distributions indexed by
``(min(n1, N1), min(n2, N2))``.  Jumps live in ``{-2,-1,0,1}^2``; the
nearest-neighbour mode restricts them to ``{-1,0,1}^2``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

NEAREST = "nearest"
EXTENDED = "extended"
JUMPS = (-2, -1, 0, 1)
OFF = 2  # array index of jump 0

ROW_TOL = 1e-12


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class JumpDistribution:
    """Probabilities of the jumps (i, j), stored as a 4x4 array at [i+2, j+2]."""

    probs: np.ndarray

    def p(self, i, j):
        return float(self.probs[i + OFF, j + OFF])

    @property
    def entries(self):
        return {(i, j): self.p(i, j) for i in JUMPS for j in JUMPS if self.probs[i + OFF, j + OFF] != 0.0}

    @classmethod
    def from_entries(cls, entries):
        a = np.zeros((4, 4))
        for (i, j), v in entries.items():
            a[i + OFF, j + OFF] += v
        return cls(a)

    def mean(self):
        jj = np.array(JUMPS, dtype=float)
        return float(jj @ self.probs.sum(axis=1)), float(self.probs.sum(axis=0) @ jj)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    N1: int
    N2: int
    grid: np.ndarray  # (N1+1, N2+1, 4, 4)
    mode: str = NEAREST
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.shape != (self.N1 + 1, self.N2 + 1, 4, 4):
            raise ModelError(f"grid shape {g.shape} does not match levels ({self.N1}, {self.N2})")
        if self.mode not in (NEAREST, EXTENDED):
            raise ModelError(f"unknown mode {self.mode!r}")
        if self.N1 < 1 or self.N2 < 1:
            raise ModelError("levels must be positive")
        g = g.copy()
        g.flags.writeable = False
        object.__setattr__(self, "grid", g)

    def cell(self, c1, c2):
        return self.grid[c1, c2]

    def p(self, c1, c2, i, j):
        return self.grid[c1, c2, i + OFF, j + OFF]

    @property
    def corner(self):
        """The S_d cell."""
        return self.grid[self.N1, self.N2]

    def transposed(self):
        """Same walk with the two coordinates swapped."""
        g = np.transpose(self.grid, (1, 0, 3, 2))
        meta = {k: v for k, v in self.meta.items() if k != "rates"}
        return ModelSpec(self.N2, self.N1, g, self.mode, meta)


def kernel_at(spec: ModelSpec, n1, n2) -> JumpDistribution:
    if n1 < 0 or n2 < 0:
        raise ModelError("states are nonnegative")
    return JumpDistribution(spec.grid[min(n1, spec.N1), min(n2, spec.N2)].copy())


@dataclass
class ValidationReport:
    ok: bool
    max_row_residual: float
    row_residuals: dict
    negative: list
    support_violations: list
    boundary_violations: list

    def failures(self):
        out = []
        for c, r in self.row_residuals.items():
            if abs(r) > ROW_TOL:
                out.append({"cell": list(c), "problem": "row sum", "residual": r})
        out += [{"cell": list(c), "problem": "negative entry", "jump": list(ij)} for c, ij in self.negative]
        out += [{"cell": list(c), "problem": "jump outside support", "jump": list(ij)} for c, ij in self.support_violations]
        out += [{"cell": list(c), "problem": "jump leaves the quarter plane", "jump": list(ij)} for c, ij in self.boundary_violations]
        return out


def validate_model(spec: ModelSpec) -> ValidationReport:
    rows, neg, supp, bnd = {}, [], [], []
    lo = -1 if spec.mode == NEAREST else -2
    for c1 in range(spec.N1 + 1):
        for c2 in range(spec.N2 + 1):
            cell = spec.grid[c1, c2]
            rows[(c1, c2)] = float(cell.sum() - 1.0)
            for i, j in itertools.product(JUMPS, JUMPS):
                v = cell[i + OFF, j + OFF]
                if v < 0:
                    neg.append(((c1, c2), (i, j)))
                if v != 0 and (i < lo or j < lo):
                    supp.append(((c1, c2), (i, j)))
                if v > 0 and (c1 + i < 0 or c2 + j < 0):
                    bnd.append(((c1, c2), (i, j)))
    worst = max(abs(r) for r in rows.values())
    ok = worst <= ROW_TOL and not neg and not supp and not bnd
    return ValidationReport(ok, worst, rows, neg, supp, bnd)


def require_valid(spec):
    rep = validate_model(spec)
    if not rep.ok:
        raise ModelError(f"invalid model: {rep.failures()[:5]}")
    return spec


def _cell_fn(v, N1, N2, name):
    """Turn a scalar, callable or table into a function of the cell."""
    if callable(v):
        return v
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        return lambda n1, n2: float(arr)
    if arr.shape != (N1 + 1, N2 + 1):
        raise ModelError(f"{name} table must have shape {(N1 + 1, N2 + 1)}")
    return lambda n1, n2: float(arr[n1, n2])


def _check_unit(name, v, closed=True):
    ok = 0.0 <= v <= 1.0 if closed else 0.0 < v < 1.0
    if not ok or not np.isfinite(v):
        raise ModelError(f"{name}={v} outside the admissible range")


# ---------------------------------------------------------------- random access

def ra_cell(a1, a2, l1, l2):
    """One-step jump law of the two-node random access network at one state."""
    d10, d01, d11, d00 = l1 * (1 - l2), l2 * (1 - l1), l1 * l2, (1 - l1) * (1 - l2)
    same = (1 - a1) * (1 - a2) + a1 * a2  # nobody succeeds
    s1, s2 = a1 * (1 - a2), a2 * (1 - a1)  # node k alone transmits
    e = {
        (1, 0): same * d10 + s2 * d11,
        (0, 1): same * d01 + s1 * d11,
        (1, 1): same * d11,
        (-1, 1): s1 * d01,
        (1, -1): s2 * d10,
        (-1, 0): s1 * d00,
        (0, -1): s2 * d00,
        (0, 0): same * d00 + s2 * d01 + s1 * d10,
    }
    return JumpDistribution.from_entries(e).probs


def build_ra_model(lam1, lam2, N1, N2, r1=None, r2=None, a1=None, a2=None, meta=None) -> ModelSpec:
    """Queue-based random access network.

    ``lam_k`` is either a scalar (then lambda_k(n) = lam_k ** min(n_k, N_k)) or a
    per-cell callable/table.  Transmission probabilities come either from
    ``r_k`` (a_k(n) = 1 - r_k ** min(n_k, N_k)) or from ``a_k`` given per cell.
    """
    def per_queue(base, k, kind):
        def f(n1, n2):
            n = (n1, n2)[k]
            return base ** n if kind == "lam" else 1.0 - base ** n
        return f

    fs = []
    for k, (lam, r, a) in enumerate(((lam1, r1, a1), (lam2, r2, a2))):
        if np.ndim(lam) == 0 and not callable(lam):
            _check_unit(f"lambda{k + 1}", float(lam), closed=False)
            fl = per_queue(float(lam), k, "lam")
        else:
            fl = _cell_fn(lam, N1, N2, f"lambda{k + 1}")
        if a is not None:
            fa = _cell_fn(a, N1, N2, f"a{k + 1}")
        elif r is not None:
            _check_unit(f"r{k + 1}", float(r), closed=False)
            fa = per_queue(float(r), k, "r")
        else:
            raise ModelError(f"need r{k + 1} or a{k + 1}")
        fs.append((fl, fa))

    grid = np.zeros((N1 + 1, N2 + 1, 4, 4))
    rates = np.zeros((4, N1 + 1, N2 + 1))
    for c1 in range(N1 + 1):
        for c2 in range(N2 + 1):
            l1, l2 = fs[0][0](c1, c2), fs[1][0](c1, c2)
            t1, t2 = fs[0][1](c1, c2), fs[1][1](c1, c2)
            for nm, v in (("lambda1", l1), ("lambda2", l2), ("a1", t1), ("a2", t2)):
                _check_unit(nm, v)
            # an empty queue cannot transmit
            t1 = t1 if c1 > 0 else 0.0
            t2 = t2 if c2 > 0 else 0.0
            grid[c1, c2] = ra_cell(t1, t2, l1, l2)
            rates[:, c1, c2] = (l1, l2, t1, t2)
    # per-cell rates, kept for the random-access stability conditions
    tables = {k: rates[i].tolist() for i, k in enumerate(("lam1", "lam2", "a1", "a2"))}
    return ModelSpec(N1, N2, grid, NEAREST, dict(meta or {}, builder="ra", rates=tables))


def ra_example_model(lam, a, N=2):
    """Random access instance with a_k(n) = a n_k/|n|, lambda(n) = lam 2^-|n| below
    the levels and (a, lam) in the saturated corner."""
    def a_k(k):
        def f(n1, n2):
            if n1 >= N and n2 >= N:
                return a
            tot = n1 + n2
            return 0.0 if tot == 0 else a * (n1, n2)[k] / tot
        return f

    def lam_f(n1, n2):
        return lam if (n1 >= N and n2 >= N) else lam * 2.0 ** (-(n1 + n2))

    return build_ra_model(lam_f, lam_f, N, N, a1=a_k(0), a2=a_k(1),
                          meta={"example": "ra", "lam": lam, "a": a, "N": N})


def ra_region_model(cap1, cap2, N=2, base1=0.2, base2=0.5, a1=0.8, a2=0.6):
    """Template for stability-region scans: arrival caps vary in the corner cell."""
    def a_k(k, amax):
        def f(n1, n2):
            if n1 >= N and n2 >= N:
                return amax
            tot = n1 + n2
            return 0.0 if tot == 0 else amax * (n1, n2)[k] / tot
        return f

    def l1(n1, n2):
        return cap1 if (n1 >= N and n2 >= N) else base1 ** n1

    def l2(n1, n2):
        return cap2 if (n1 >= N and n2 >= N) else base2 ** n2

    return build_ra_model(l1, l2, N, N, a1=a_k(0, a1), a2=a_k(1, a2),
                          meta={"example": "ra-region", "cap1": cap1, "cap2": cap2})


# ---------------------------------------------------------------- processor sharing

def _service_split(beta1, m1, m2, mu1, mu2):
    """(class-1 departs, class-2 departs, nobody departs) after mobility."""
    if m1 == 0 and m2 == 0:
        return 0.0, 0.0, 1.0
    b1 = beta1(m1, m2)
    if m1 == 0:
        b1 = 0.0
    if m2 == 0:
        b1 = 1.0
    s1 = b1 * mu1(m1) if m1 > 0 else 0.0
    s2 = (1.0 - b1) * mu2(m2) if m2 > 0 else 0.0
    return s1, s2, 1.0 - s1 - s2


def ldgps_cell(n1, n2, lam1, lam2, mu1, mu2, th1, th2, beta1):
    """Closed-form one-step probabilities of the processor-sharing walk with
    impatience, grouped by mobility outcome."""
    l1, l2 = lam1(n1, n2), lam2(n1, n2)
    d = {(1, 0): l1 * (1 - l2), (0, 1): l2 * (1 - l1), (1, 1): l1 * l2, (0, 0): (1 - l1) * (1 - l2)}
    t1 = th1(n1) if n1 > 0 else 0.0
    t2 = th2(n2) if n2 > 0 else 0.0
    u1, u2 = 1 - t1, 1 - t2

    def s(m1, m2):
        return _service_split(beta1, m1, m2, mu1, mu2)

    a1, a2, a0 = s(n1, n2)                      # no mobility
    b1, b2, b0 = s(max(n1 - 1, 0), n2)          # class 1 leaves
    c1, c2, c0 = s(n1, max(n2 - 1, 0))          # class 2 leaves
    e1, e2, e0 = s(max(n1 - 1, 0), max(n2 - 1, 0))  # both leave
    P = {}
    P[(-2, 0)] = t1 * u2 * b1 * d[0, 0] + t1 * t2 * e1 * d[0, 1]
    P[(0, -2)] = u1 * t2 * c2 * d[0, 0] + t1 * t2 * e2 * d[1, 0]
    P[(-2, 1)] = t1 * u2 * b1 * d[0, 1]
    P[(1, -2)] = u1 * t2 * c2 * d[1, 0]
    P[(-2, -1)] = t1 * t2 * e1 * d[0, 0]
    P[(-1, -2)] = t1 * t2 * e2 * d[0, 0]
    P[(1, -1)] = u1 * t2 * (c2 * d[1, 1] + c0 * d[1, 0]) + u1 * u2 * a2 * d[1, 0]
    P[(-1, 1)] = t1 * u2 * (b1 * d[1, 1] + b0 * d[0, 1]) + u1 * u2 * a1 * d[0, 1]
    P[(1, 1)] = u1 * u2 * a0 * d[1, 1]
    P[(-1, -1)] = (t1 * t2 * (e1 * d[1, 0] + e2 * d[0, 1] + e0 * d[0, 0])
                   + t1 * u2 * b2 * d[0, 0] + u1 * t2 * c1 * d[0, 0])
    P[(-1, 0)] = (u1 * u2 * a1 * d[0, 0] + t1 * u2 * (b1 * d[1, 0] + b2 * d[0, 1] + b0 * d[0, 0])
                  + u1 * t2 * c1 * d[0, 1] + t1 * t2 * (e1 * d[1, 1] + e0 * d[0, 1]))
    P[(0, -1)] = (u1 * u2 * a2 * d[0, 0] + u1 * t2 * (c2 * d[0, 1] + c1 * d[1, 0] + c0 * d[0, 0])
                  + t1 * u2 * b2 * d[1, 0] + t1 * t2 * (e2 * d[1, 1] + e0 * d[1, 0]))
    P[(1, 0)] = u1 * u2 * (a0 * d[1, 0] + a2 * d[1, 1]) + u1 * t2 * c0 * d[1, 1]
    P[(0, 1)] = u1 * u2 * (a0 * d[0, 1] + a1 * d[1, 1]) + t1 * u2 * b0 * d[1, 1]
    P[(0, 0)] = (u1 * u2 * (a1 * d[1, 0] + a2 * d[0, 1] + a0 * d[0, 0])
                 + t1 * u2 * (b0 * d[1, 0] + b2 * d[1, 1])
                 + u1 * t2 * (c0 * d[0, 1] + c1 * d[1, 1])
                 + t1 * t2 * e0 * d[1, 1])
    return JumpDistribution.from_entries(P).probs


def ldgps_enumerate(n1, n2, lam1, lam2, mu1, mu2, th1, th2, beta1):
    """Event-tree enumeration of one slot: mobility, scheduler pick, service
    outcome, then the two arrivals.  Independent of :func:`ldgps_cell`."""
    out = np.zeros((4, 4))
    l1, l2 = lam1(n1, n2), lam2(n1, n2)
    th = (th1(n1) if n1 > 0 else 0.0, th2(n2) if n2 > 0 else 0.0)
    for M1, M2 in itertools.product((0, 1), (0, 1)):
        pm = (th[0] if M1 else 1 - th[0]) * (th[1] if M2 else 1 - th[1])
        if pm == 0.0:
            continue
        m = (n1 - M1, n2 - M2)
        if m == (0, 0):
            picks = [(None, 1.0)]
        elif m[0] == 0:
            picks = [(2, 1.0)]
        elif m[1] == 0:
            picks = [(1, 1.0)]
        else:
            b = beta1(*m)
            picks = [(1, b), (2, 1 - b)]
        for k, pk in picks:
            if k is None:
                outcomes = [((0, 0), 1.0)]
            else:
                mu = mu1(m[0]) if k == 1 else mu2(m[1])
                done = (1, 0) if k == 1 else (0, 1)
                outcomes = [(done, mu), ((0, 0), 1 - mu)]
            for S, ps in outcomes:
                for A1, A2 in itertools.product((0, 1), (0, 1)):
                    pa = (l1 if A1 else 1 - l1) * (l2 if A2 else 1 - l2)
                    i, j = A1 - M1 - S[0], A2 - M2 - S[1]
                    out[i + OFF, j + OFF] += pm * pk * ps * pa
    return out


def _fn1(v, name):
    if callable(v):
        return v
    x = float(v)
    _check_unit(name, x)
    return lambda n: x


def _fn2(v, name):
    if callable(v):
        return v
    x = float(v)
    _check_unit(name, x)
    return lambda n1, n2: x


def build_ldgps_model(lam1, lam2, mu1, mu2, th1, th2, beta1, N1, N2, meta=None) -> ModelSpec:
    """Processor sharing with geometric impatience (jumps down to -2).

    ``beta1(m1, m2)`` is the probability the server picks class 1 at the
    post-impatience state; class 2 is picked otherwise.
    """
    lam1, lam2 = _fn2(lam1, "lambda1"), _fn2(lam2, "lambda2")
    mu1, mu2 = _fn1(mu1, "mu1"), _fn1(mu2, "mu2")
    th1, th2 = _fn1(th1, "theta1"), _fn1(th2, "theta2")
    if not callable(beta1):
        b = float(beta1)
        _check_unit("beta", b)
        beta1 = lambda m1, m2, b=b: b  # noqa: E731
    grid = np.zeros((N1 + 1, N2 + 1, 4, 4))
    for c1 in range(N1 + 1):
        for c2 in range(N2 + 1):
            for nm, v in (("lambda1", lam1(c1, c2)), ("lambda2", lam2(c1, c2)), ("mu1", mu1(c1)),
                          ("mu2", mu2(c2)), ("theta1", th1(c1)), ("theta2", th2(c2))):
                _check_unit(nm, v)
            for m1 in (c1, max(c1 - 1, 0)):
                for m2 in (c2, max(c2 - 1, 0)):
                    if m1 > 0 and m2 > 0:
                        _check_unit("beta1", beta1(m1, m2))
            grid[c1, c2] = ldgps_cell(c1, c2, lam1, lam2, mu1, mu2, th1, th2, beta1)
    return ModelSpec(N1, N2, grid, EXTENDED, dict(meta or {}, builder="ldgps"))


# ---------------------------------------------------------------- scheduling policies

POLICIES = ("HOL", "SQF", "LQF", "Bernoulli", "QLT", "QLT-Bernoulli", "DGPS", "modified-DGPS", "custom")


@dataclass(frozen=True)
class PolicyParams:
    policy: str
    beta: float = 0.5
    p: float = 0.5
    L: int = 0
    table: tuple | None = None  # custom beta1 per cell

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ModelError(f"unknown policy {self.policy!r}")
        _check_unit("beta", self.beta)
        _check_unit("p", self.p)
        if int(self.L) != self.L or self.L < 0:
            raise ModelError("threshold L must be a nonnegative integer")


def policy_beta(policy: PolicyParams, N1) -> Callable[[int, int], float]:
    """beta1(n1, n2) for a state with both queues nonempty."""
    tag = policy.policy
    L = min(int(policy.L), N1)
    if tag == "HOL":
        return lambda n1, n2: 1.0
    if tag == "SQF":
        return lambda n1, n2: 1.0 if n1 <= n2 else 0.0
    if tag == "LQF":
        return lambda n1, n2: 1.0 if n1 >= n2 else 0.0
    if tag == "Bernoulli":
        return lambda n1, n2: policy.p
    if tag == "QLT":
        return lambda n1, n2: 1.0 if n1 > L else 0.0
    if tag == "QLT-Bernoulli":
        return lambda n1, n2: 1.0 if n1 > L else policy.p
    if tag == "DGPS":
        return lambda n1, n2: policy.beta
    if tag == "modified-DGPS":
        return lambda n1, n2: policy.beta ** n2
    tab = np.asarray(policy.table, dtype=float)
    return lambda n1, n2: float(tab[min(n1, tab.shape[0] - 1), min(n2, tab.shape[1] - 1)])


def build_policy_model(policy: PolicyParams, arrivals, services, N1, N2) -> ModelSpec:
    """Single server, two classes, no impatience; ``arrivals`` and ``services``
    are pairs of scalars or functions."""
    beta = policy_beta(policy, N1)
    spec = build_ldgps_model(arrivals[0], arrivals[1], services[0], services[1], 0.0, 0.0, beta, N1, N2,
                             meta={"builder": "policy", "policy": policy.policy})
    # without impatience the walk is nearest neighbour
    return ModelSpec(N1, N2, spec.grid, NEAREST, spec.meta)


# ---------------------------------------------------------------- config files

def _parse_grid(rows, N1, N2):
    grid = np.zeros((N1 + 1, N2 + 1, 4, 4))
    if len(rows) != N1 + 1 or any(len(r) != N2 + 1 for r in rows):
        raise ModelError("grid must be (n1+1) x (n2+1)")
    for c1, row in enumerate(rows):
        for c2, cell in enumerate(row):
            for key, v in cell.items():
                try:
                    i, j = (int(s) for s in key.split(","))
                except ValueError as exc:
                    raise ModelError(f"bad jump key {key!r}") from exc
                if i not in JUMPS or j not in JUMPS:
                    raise ModelError(f"jump {key} out of range")
                grid[c1, c2, i + OFF, j + OFF] = float(v)
    return grid


def grid_to_json(spec):
    rows = []
    for c1 in range(spec.N1 + 1):
        row = []
        for c2 in range(spec.N2 + 1):
            row.append({f"{i},{j}": float(spec.p(c1, c2, i, j)) for i in JUMPS for j in JUMPS
                        if spec.p(c1, c2, i, j) != 0.0})
        rows.append(row)
    return rows


def spec_from_dict(doc) -> ModelSpec:
    try:
        return _spec_from_dict(doc)
    except KeyError as exc:
        raise ModelError(f"missing model field {exc}") from None
    except TypeError as exc:
        raise ModelError(f"bad model field: {exc}") from None


def _spec_from_dict(doc) -> ModelSpec:
    try:
        N1, N2 = int(doc["n1"]), int(doc["n2"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError("config needs integer n1 and n2") from exc
    mode = doc.get("mode", NEAREST)
    b = dict(doc.get("builder") or {"kind": "table"})
    kind = b.pop("kind", "table")
    if kind == "table":
        if "grid" not in doc:
            raise ModelError("table builder needs a grid")
        return ModelSpec(N1, N2, _parse_grid(doc["grid"], N1, N2), mode, {"builder": "table"})
    if kind == "ra":
        if b.get("example"):
            if N1 != N2:
                raise ModelError("the example random access model uses n1 == n2")
            return ra_example_model(float(b["lam"]), float(b["a"]), N1)
        return build_ra_model(b["lam1"], b["lam2"], N1, N2, r1=b.get("r1"), r2=b.get("r2"),
                              a1=b.get("a1"), a2=b.get("a2"))
    if kind == "ldgps":
        return build_ldgps_model(b["lam1"], b["lam2"], b["mu1"], b["mu2"], b.get("theta1", 0.0),
                                 b.get("theta2", 0.0), b.get("beta", 0.5), N1, N2)
    if kind == "policy":
        pol = PolicyParams(b["policy"], beta=b.get("beta", 0.5), p=b.get("p", 0.5), L=b.get("L", 0),
                           table=b.get("table"))
        return build_policy_model(pol, (b["lam1"], b["lam2"]), (b["mu1"], b["mu2"]), N1, N2)
    raise ModelError(f"unknown builder kind {kind!r}")


def load_model(path) -> ModelSpec:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read model file: {exc}") from exc
    return spec_from_dict(doc)


def spec_to_dict(spec):
    return {"n1": spec.N1, "n2": spec.N2, "mode": spec.mode, "builder": {"kind": "table"},
            "grid": grid_to_json(spec)}
