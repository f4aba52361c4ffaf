import numpy as np
import pytest
from numpy.polynomial import polynomial as P

from conftest import model, solved, truncated
from quarterplane.affine import evaluate
from quarterplane.assembly import (CramerComponents, FunctionalCoeffs, b_vectors,
                                   build_K_matrix, f_polys, n_unknowns, transpose_perm, uidx)
from quarterplane.kernel import kernel_coeffs, root_X0
from quarterplane.model import EXTENDED, ModelSpec, build_ldgps_model
from quarterplane.solver import _equilibrium_rows

NAMES = ["ra-example", "dgps", "ra-geometric"]


def _pgf_columns(ts, N1, x):
    """sum_{n1 >= N1} pi(n1, n2) x**(n1 - N1) from a truncated solution."""
    pw = x ** np.arange(ts.T1 + 1 - N1)
    return pw @ ts.pi[N1:]


@pytest.mark.parametrize("name", NAMES)
def test_K_determinant(name):
    spec = model(name)
    _, _, f3 = f_polys(spec)
    rng = np.random.default_rng(0)
    for x in rng.normal(size=20) + 1j * rng.normal(size=20):
        want = (-1) ** spec.N2 * np.prod([P.polyval(x, f3[i]) for i in range(1, spec.N2 + 1)])
        assert abs(np.linalg.det(build_K_matrix(spec, x)) - want) < 1e-11 * max(1, abs(want))


def test_single_row_matrix():
    spec = build_ldgps_model(0.3, 0.2, 0.7, 0.6, 0.0, 0.0, 0.5, 2, 1)
    _, _, f3 = f_polys(spec)
    x = 0.4 - 0.3j
    assert build_K_matrix(spec, x)[0, 0] == pytest.approx(-P.polyval(x, f3[1]))


def test_extended_band_is_populated():
    spec = build_ldgps_model(0.3, 0.2, 0.7, 0.6, 0.3, 0.3, 0.5, 2, 3)
    assert spec.mode == EXTENDED
    K = build_K_matrix(spec, 0.5)
    assert np.any(np.abs(np.diag(K, 1)) > 0)
    with pytest.raises(NotImplementedError):
        CramerComponents(spec)


@pytest.mark.parametrize("name", NAMES)
def test_column_recursion_matches_truncation(name):
    # the column functions reproduce the column generating functions of the oracle
    sol, ts = solved(name), truncated(name)
    N1 = sol.spec.N1
    for x in (0.5, -0.4, 0.3 + 0.2j):
        g = sol.g_columns(np.array([x]))[0]
        assert np.max(np.abs(g - _pgf_columns(ts, N1, x)[:sol.spec.N2 + 1])) < 1e-9


@pytest.mark.parametrize("name", NAMES)
def test_row_equations_hold(name):
    # f3_{k+1} g_{k+1} = f2_k g_k - f1_{k-1} g_{k-1} - b_k along the columns n1 >= N1
    sol = solved(name)
    spec = sol.spec
    f1, f2, f3 = f_polys(spec)
    B0, B1 = b_vectors(spec)
    x = np.array([0.35 - 0.1j])
    g = sol.g_columns(x)[0]
    u = sol.u[:n_unknowns(spec)]
    for k in range(spec.N2):
        b = evaluate(x[0] * B1[k] + B0[k], u)
        lhs = P.polyval(x[0], f3[k + 1]) * g[k + 1]
        rhs = P.polyval(x[0], f2[k]) * g[k] - b
        if k:
            rhs -= P.polyval(x[0], f1[k - 1]) * g[k - 1]
        assert abs(lhs - rhs) < 1e-12


def test_components_vanish_with_unknowns(ra_spec):
    e, t = CramerComponents(ra_spec)(np.array([0.2, 0.7j]))
    assert np.all(t[..., 0] == 0)
    assert np.all(e[..., 0] == 1)


def test_transpose_perm_round_trip():
    spec = model("dgps")
    perm = transpose_perm(spec)
    assert sorted(perm) == list(range(n_unknowns(spec)))
    t = spec.transposed()
    assert perm[2 * (spec.N1 + 1) + 1] == uidx(spec, 1, 2)
    assert t.N1 == spec.N2


@pytest.mark.parametrize("name", NAMES)
def test_functional_equation_vanishes_on_kernel_zeros(name):
    sol = solved(name)
    kp = kernel_coeffs(sol.spec)
    y = 0.97 * np.exp(1j * np.linspace(0.1, 2 * np.pi - 0.1, 60))
    x = root_X0(kp, y)
    # keep the pairs where both boundary functions are evaluated through their maps
    ok = sol.g_side.contour.contains(x) & sol.h_side.contour.contains(y)
    assert ok.sum() >= 10
    num = sol.numerator(x[ok], y[ok])
    assert np.max(np.abs(num)) < 1e-9


@pytest.mark.parametrize("name", NAMES)
def test_structural_identities(name):
    sol = solved(name)
    spec = sol.spec
    N1, N2 = spec.N1, spec.N2
    assert sol.g0(0.0) == pytest.approx(sol.corner[N1, 0], abs=1e-10)
    assert sol.h0(0.0) == pytest.approx(sol.corner[0, N2], abs=1e-10)
    assert sum(sol.region_masses().values()) == pytest.approx(1.0, abs=1e-9)
    rows, _ = _equilibrium_rows(spec, len(sol.u))
    if rows:
        assert np.max(np.abs(evaluate(np.array(rows), sol.u))) < 1e-12
    # g(0, 0) = pi(N1, N2)
    assert sol.probabilities(N1 + 1, N2 + 1)[N1, N2] == pytest.approx(sol.corner[N1, N2], abs=1e-10)


def test_joint_pgf_matches_truncation(ra_solution, ra_truncated):
    N1, N2 = ra_solution.spec.N1, ra_solution.spec.N2
    pi = ra_truncated.pi[N1:, N2:]
    for x, y in ((0.5, 0.5), (0.9, -0.3), (0.2 + 0.3j, 0.6)):
        want = (x ** np.arange(pi.shape[0])) @ pi @ (y ** np.arange(pi.shape[1]))
        assert abs(ra_solution.joint_pgf(x, y) - want) < 1e-10


def test_functional_coeffs_on_a_symmetric_walk(ra_spec):
    fc = FunctionalCoeffs(ra_spec)
    x, y = 0.3 + 0.1j, 0.5 - 0.2j
    # swapping the coordinates of a symmetric walk swaps A and B
    assert fc.A(x, y) == pytest.approx(fc.B(y, x), abs=1e-14)


def test_nonsquare_corner():
    g = np.zeros((2, 3, 4, 4))
    spec = ModelSpec(1, 2, g)
    assert n_unknowns(spec) == 6 and uidx(spec, 1, 2) == 5
