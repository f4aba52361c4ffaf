"""Reference answers that do not use the analytic machinery: a truncated-chain
stationary solve and a slotted Monte Carlo simulation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .model import JUMPS, OFF, ModelSpec

log = logging.getLogger(__name__)


class OracleError(RuntimeError):
    pass


# ---------------------------------------------------------------- truncation

def truncated_matrix(spec: ModelSpec, T1, T2):
    """Sparse transition matrix on [0,T1] x [0,T2]; outward jump components are
    dropped, i.e. the walk stays on the truncation edge."""
    n = (T1 + 1) * (T2 + 1)
    n1 = np.repeat(np.arange(T1 + 1), T2 + 1)
    n2 = np.tile(np.arange(T2 + 1), T1 + 1)
    c1, c2 = np.minimum(n1, spec.N1), np.minimum(n2, spec.N2)
    rows, cols, vals = [], [], []
    for i in JUMPS:
        for j in JUMPS:
            pv = spec.grid[c1, c2, i + OFF, j + OFF]
            nz = pv != 0
            if not np.any(nz):
                continue
            t1 = np.clip(n1 + i, 0, T1)
            t2 = np.clip(n2 + j, 0, T2)
            rows.append(np.nonzero(nz)[0])
            cols.append((t1 * (T2 + 1) + t2)[nz])
            vals.append(pv[nz])
    P = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    P.sum_duplicates()
    return P


def gth_dense(P):
    """Stationary vector of a stochastic matrix by GTH elimination."""
    A = np.array(P, dtype=float)
    n = A.shape[0]
    piv = np.zeros(n)
    for k in range(n - 1, 0, -1):
        s = A[k, :k].sum()
        if s <= 0:
            raise OracleError("chain is reducible (GTH pivot vanished)")
        A[:k, :k] += np.outer(A[:k, k], A[k, :k]) / s
        piv[k] = s
    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        pi[k] = pi[:k] @ A[:k, k] / piv[k]
    return pi / pi.sum()


def gth_banded(P, bw):
    """GTH elimination exploiting a band |i - j| <= bw (fill-in stays inside)."""
    P = sp.csr_matrix(P)
    n = P.shape[0]
    W = np.zeros((n, 2 * bw + 1))
    coo = P.tocoo()
    if np.any(np.abs(coo.col - coo.row) > bw):
        raise OracleError("matrix exceeds the declared bandwidth")
    np.add.at(W, (coo.row, coo.col - coo.row + bw), coo.data)
    piv = np.zeros(n)
    ci = np.arange(bw)
    dgrid = ci[None, :] - ci[:, None] + bw  # d index for block (row ci, col cj)
    for k in range(n - 1, 0, -1):
        m = min(bw, k)
        lo = k - m
        row_k = W[k, bw - m:bw]  # P[k, lo:k]
        s = row_k.sum()
        if s <= 0:
            raise OracleError("chain is reducible (GTH pivot vanished)")
        rr = np.arange(lo, k)
        col_k = W[rr, k - rr + bw]  # P[lo:k, k]
        if m == bw:
            W[rr[:, None], dgrid] += np.outer(col_k, row_k) / s
        else:
            dg = dgrid[:m, :m]
            W[rr[:, None], dg] += np.outer(col_k, row_k) / s
        piv[k] = s
    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        m = min(bw, k)
        rr = np.arange(k - m, k)
        pi[k] = pi[rr] @ W[rr, k - rr + bw] / piv[k]
    return pi / pi.sum()


def power_stationary(P, tol=1e-14, max_iter=200000, x0=None):
    """Cross-check: damped power iteration pi <- pi (I + P) / 2."""
    n = P.shape[0]
    PT = sp.csr_matrix(P).T.tocsr()
    x = np.full(n, 1.0 / n) if x0 is None else np.asarray(x0, dtype=float).copy()
    for it in range(max_iter):
        y = 0.5 * (x + PT @ x)
        y /= y.sum()
        if np.abs(y - x).max() < tol:
            return y, it
        x = y
    raise OracleError("power iteration did not converge")


@dataclass
class TruncatedSolution:
    T1: int
    T2: int
    pi: np.ndarray  # (T1+1, T2+1)
    scheme: str
    residual: float
    tail: float
    history: list = field(default_factory=list)
    levels: tuple = (0, 0)

    def shares(self):
        N1, N2 = self.levels
        pi = self.pi
        return {"S_a": float(pi[:N1, :N2].sum()), "S_b": float(pi[N1:, :N2].sum()),
                "S_c": float(pi[:N1, N2:].sum()), "S_d": float(pi[N1:, N2:].sum())}

    def prob(self, n1, n2):
        if n1 > self.T1 or n2 > self.T2:
            return 0.0
        return float(self.pi[n1, n2])

    def window(self, W1, W2):
        out = np.zeros((W1 + 1, W2 + 1))
        a, b = min(W1, self.T1), min(W2, self.T2)
        out[:a + 1, :b + 1] = self.pi[:a + 1, :b + 1]
        return out

    def moments(self):
        m1 = self.pi.sum(axis=1) @ np.arange(self.T1 + 1)
        m2 = self.pi.sum(axis=0) @ np.arange(self.T2 + 1)
        return float(m1), float(m2)


def _tail_estimate(pi):
    """Mass beyond the box extrapolated geometrically from the edge strips."""
    tails = []
    for marg in (pi.sum(axis=1), pi.sum(axis=0)):
        last, prev = marg[-1], marg[-2]
        if last <= 0:
            tails.append(0.0)
            continue
        r = last / prev if prev > 0 else 1.0
        tails.append(np.inf if r >= 0.999 else float(last * r / (1 - r)))
    return sum(tails)


def closed_class(P):
    """Indices of the unique closed communicating class; transient states
    (for instance levels a vanishing arrival rate never reaches) carry no
    stationary mass."""
    ncomp, lab = connected_components(P, directed=True, connection="strong")
    if ncomp == 1:
        return np.arange(P.shape[0])
    coo = sp.coo_matrix(P)
    leaving = np.zeros(ncomp, dtype=bool)
    out = lab[coo.row] != lab[coo.col]
    leaving[lab[coo.row[out]]] = True
    closed = np.nonzero(~leaving)[0]
    if closed.size != 1:
        raise OracleError(f"truncated chain has {closed.size} closed classes")
    return np.nonzero(lab == closed[0])[0]


def _solve_box(spec, T1, T2):
    P = truncated_matrix(spec, T1, T2)
    keep = closed_class(P)
    bw = 2 * (T2 + 1) + 2
    pi = np.zeros(P.shape[0])
    pi[keep] = gth_banded(P[keep][:, keep], bw)
    res = float(np.abs(P.T @ pi - pi).max())
    return pi.reshape(T1 + 1, T2 + 1), res


def truncated_stationary(spec: ModelSpec, T1=None, T2=None, tail_tol=1e-10, max_states=250000):
    """Stationary law of the truncated walk.  With ``T1``/``T2`` omitted the box
    is grown until the extrapolated tail drops below ``tail_tol``."""
    auto = T1 is None or T2 is None
    T1 = T1 or max(2 * spec.N1 + 8, 16)
    T2 = T2 or max(2 * spec.N2 + 8, 16)
    if T1 <= spec.N1 + 2 or T2 <= spec.N2 + 2:
        raise OracleError("truncation levels must exceed the homogeneity levels by more than 2")
    history = []
    while True:
        if (T1 + 1) * (T2 + 1) > max_states:
            raise OracleError(f"truncation box {T1}x{T2} exceeds the state budget")
        pi, res = _solve_box(spec, T1, T2)
        tail = _tail_estimate(pi)
        history.append((T1, T2, tail))
        log.debug("truncation %dx%d tail %.2e", T1, T2, tail)
        if not auto or tail < tail_tol:
            break
        m1, m2 = pi.sum(axis=1), pi.sum(axis=0)
        grow1 = m1[-1] * 10 > tail_tol
        grow2 = m2[-1] * 10 > tail_tol
        if not (grow1 or grow2):
            grow1 = grow2 = True
        T1 = 2 * T1 if grow1 else T1
        T2 = 2 * T2 if grow2 else T2
    return TruncatedSolution(T1, T2, pi, "edge-stay", res, tail, history, (spec.N1, spec.N2))


# ---------------------------------------------------------------- simulation

try:
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*a, **k):
        def wrap(f):
            return f
        return wrap if not a or not callable(a[0]) else a[0]


@njit(cache=True)
def _sim_chunk(state, u, cum, di, dj, N1, N2, hist, W1, W2, count, trace, tstep, t0):
    n1, n2 = state[0], state[1]
    over = 0
    nj = di.shape[0]
    for k in range(u.shape[0]):
        c1 = n1 if n1 < N1 else N1
        c2 = n2 if n2 < N2 else N2
        x = u[k]
        m = 0
        while m < nj - 1 and x >= cum[c1, c2, m]:
            m += 1
        n1 += di[m]
        n2 += dj[m]
        if n1 < 0:
            n1 = 0
        if n2 < 0:
            n2 = 0
        t = t0 + k
        if t >= count:
            if n1 <= W1 and n2 <= W2:
                hist[n1, n2] += 1
            else:
                over += 1
        if (t + 1) % tstep == 0:
            idx = (t + 1) // tstep - 1
            if idx < trace.shape[0]:
                trace[idx, 0] = n1
                trace[idx, 1] = n2
    state[0] = n1
    state[1] = n2
    return over


@dataclass
class SimulationResult:
    horizon: int
    seed: int
    burn_in: int
    freq: np.ndarray  # empirical occupation frequencies on the window
    overflow: float
    trace_t: np.ndarray
    trace: np.ndarray  # (Q1, Q2) at checkpoints
    slope: tuple
    growing: bool
    final: tuple

    def mean_queue(self):
        W1, W2 = self.freq.shape
        return float(self.freq.sum(axis=1) @ np.arange(W1)), float(self.freq.sum(axis=0) @ np.arange(W2))


def _cum_table(spec):
    g = spec.grid.reshape(spec.N1 + 1, spec.N2 + 1, 16)
    cum = np.cumsum(g, axis=2)
    cum[..., -1] = 1.0 + 1e-12
    di = np.repeat(np.array(JUMPS), 4).astype(np.int64)
    dj = np.tile(np.array(JUMPS), 4).astype(np.int64)
    return cum, di, dj


def rng_stream(seed, stream=0):
    """Counter-based stream ``stream`` derived from ``seed`` (Philox)."""
    ss = np.random.SeedSequence(seed, spawn_key=(stream,))
    return np.random.Generator(np.random.Philox(ss))


def growth_slope(t, q):
    """Least-squares slope of a queue trace over the second half."""
    h = len(t) // 2
    tt = t[h:].astype(float)
    if len(tt) < 2:
        return 0.0
    qq = q[h:].astype(float)
    tt = tt - tt.mean()
    return float((tt @ (qq - qq.mean())) / (tt @ tt))


def simulate(spec: ModelSpec, horizon=10 ** 6, seed=0, window=(40, 40), start=(0, 0), stream=0,
             chunk=1 << 20, n_trace=1000, slope_tol=None) -> SimulationResult:
    rng = rng_stream(seed, stream)
    cum, di, dj = _cum_table(spec)
    W1, W2 = window
    hist = np.zeros((W1 + 1, W2 + 1), dtype=np.int64)
    burn = horizon // 10
    tstep = max(1, horizon // n_trace)
    trace = np.zeros((horizon // tstep, 2), dtype=np.int64)
    state = np.array(start, dtype=np.int64)
    over = 0
    t0 = 0
    while t0 < horizon:
        m = min(chunk, horizon - t0)
        u = rng.random(m)
        over += _sim_chunk(state, u, cum, di, dj, spec.N1, spec.N2, hist, W1, W2, burn, trace, tstep, t0)
        t0 += m
    counted = horizon - burn
    tt = (np.arange(trace.shape[0]) + 1) * tstep
    s1 = growth_slope(tt, trace[:, 0])
    s2 = growth_slope(tt, trace[:, 1])
    if slope_tol is None:
        # growth must be visible well above diffusive fluctuations
        slope_tol = 20.0 / np.sqrt(horizon)
    growing = bool(max(s1, s2) > slope_tol and trace[-1].sum() > 0.5 * slope_tol * horizon)
    return SimulationResult(horizon, seed, burn, hist / counted, over / counted, tt, trace, (s1, s2),
                            growing, (int(state[0]), int(state[1])))


# ---------------------------------------------------------------- comparison

@dataclass
class DiffReport:
    sup: float
    tv: float
    worst: list

    def as_dict(self):
        return {"sup": self.sup, "tv": self.tv, "worst": self.worst}


def compare(a, b, window=None, top=5) -> DiffReport:
    """Distances between two probability grids (arrays or objects exposing
    ``window(W1, W2)``) on a common window."""
    def grid(s, W):
        if hasattr(s, "window"):
            return s.window(*W)
        arr = np.asarray(s, dtype=float)
        out = np.zeros((W[0] + 1, W[1] + 1))
        a1, a2 = min(W[0] + 1, arr.shape[0]), min(W[1] + 1, arr.shape[1])
        out[:a1, :a2] = arr[:a1, :a2]
        return out

    if window is None:
        sa = a.shape if hasattr(a, "shape") else a.pi.shape
        sb = b.shape if hasattr(b, "shape") else b.pi.shape
        window = (min(sa[0], sb[0]) - 1, min(sa[1], sb[1]) - 1)
    ga, gb = grid(a, window), grid(b, window)
    d = np.abs(ga - gb)
    order = np.argsort(d, axis=None)[::-1][:top]
    worst = [{"cell": [int(i) for i in np.unravel_index(k, d.shape)], "diff": float(d.flat[k])} for k in order]
    return DiffReport(float(d.max()), float(0.5 * d.sum()), worst)
