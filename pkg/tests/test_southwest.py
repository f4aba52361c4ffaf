"""Walks with the (-1,-1) jump: the solver against the truncated chain, and
the rejection of kernels whose cut reaches the origin."""
import numpy as np
import pytest

from conftest import random_cell
from quarterplane.kernel import KernelError, branch_points, kernel_coeffs
from quarterplane.metrics import expected_queue_lengths
from quarterplane.model import OFF, ModelSpec
from quarterplane.oracle import truncated_stationary
from quarterplane.solver import solve_model
from quarterplane.stability import classify_stability


def _sw_walks(seed):
    """Ergodic 3x3 walks with every (-1,-1) jump allowed, negative corner drifts."""
    rng = np.random.default_rng(seed)
    while True:
        g = np.zeros((3, 3, 4, 4))
        for c1 in range(3):
            for c2 in range(3):
                c = random_cell(rng, zero_sw=False)
                c[OFF + 1, :] *= 0.3
                c[:, OFF + 1] *= 0.3
                if c1 == 0:
                    c[OFF - 1] = 0
                if c2 == 0:
                    c[:, OFF - 1] = 0
                g[c1, c2] = c / c.sum()
        spec = ModelSpec(2, 2, g)
        st = classify_stability(spec)
        if st.classification == "ergodic" and st.drifts.Ex < 0 and st.drifts.Ey < 0:
            yield spec


def _pick(seed, n, ok):
    out = []
    for spec in _sw_walks(seed):
        try:
            branch_points(kernel_coeffs(spec))
            good = True
        except KernelError:
            good = False
        if good == ok:
            out.append(spec)
        if len(out) == n:
            return out


def test_cut_through_origin_is_rejected():
    for spec in _pick(3, 3, ok=False):
        assert spec.p(2, 2, -1, -1) > 0
        with pytest.raises(KernelError, match="contains 0"):
            branch_points(kernel_coeffs(spec))


@pytest.mark.parametrize("seed", [2, 6])
def test_sw_walks_match_truncation(seed):
    labels = []
    for spec in _pick(seed, 3, ok=True):
        sol = solve_model(spec)
        ts = truncated_stationary(spec)
        assert ts.tail < 1e-10
        assert np.abs(sol.corner - ts.pi[:3, :3]).max() < 1e-8
        e, ref = np.array(expected_queue_lengths(sol)), np.array(expected_queue_lengths(ts))
        assert np.max(np.abs(e / ref - 1)) < 1e-6
        assert sol.residuals["solvability"] < 1e-8
        labels += list(sol.residuals["per_equation"])
    if seed == 2:
        # this draw has column poles inside the contour, outside the disc
        assert any("residue" in lab for lab in labels)
