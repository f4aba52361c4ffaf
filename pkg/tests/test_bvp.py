import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quarterplane.affine import evaluate
from quarterplane.bvp import (BVPError, RHProblem, cauchy_coeffs, compute_index, g0_derivatives_at_zero,
                              real_conditions, solvability_conditions, solve_rh)
from quarterplane.conformal import solve_theodorsen

R = 0.8


class Circle:
    def rho_of(self, theta):
        return np.full(np.shape(theta), R)


def _problem(power, f=None, J=256):
    """Circle of radius R with U = (1 + 0.2 cos phi) exp(0.1 i sin phi) (x/R)**power.

    With ``f`` the data are w = Re(i U f), so f solves the problem."""
    cmap = solve_theodorsen(Circle(), J, 1e-14)
    x = cmap.boundary()
    phi = cmap.phi
    U = (1 + 0.2 * np.cos(phi)) * np.exp(0.1j * np.sin(phi)) * (x / R) ** power
    if f is None:
        w = np.stack([np.cos(phi), np.ones(J)], axis=1)
    else:
        w = (1j * U * f(x)).real[:, None]
    prob = RHProblem(cmap, Circle(), x, np.zeros(J), U, w, [])
    prob.chi = compute_index(prob)
    return prob


def _known(x):
    return 0.5 + 0.2 * x - 0.1 * x ** 3


@pytest.mark.parametrize("power", [0, 1, 2, 3, -1])
def test_index_counts_turns(power):
    # multiplying U by x lowers chi by one
    assert _problem(power).chi == -power


def test_solution_satisfies_boundary_condition():
    prob = _problem(0)
    sol = solve_rh(prob)
    assert sol.kappa == 0 and sol.n_free == 1
    T = sol.T(np.exp(1j * prob.cmap.phi))
    res = (1j * prob.U[:, None] * T).real - prob.w
    assert np.max(np.abs(res)) < 1e-10
    # the free constant solves the homogeneous problem
    Tf = sol.T_free(np.exp(1j * prob.cmap.phi))
    assert np.max(np.abs((1j * prob.U[:, None] * Tf).real)) < 1e-12


@pytest.mark.parametrize("power", [1, 2])
def test_positive_index_reproduces_unique_solution(power):
    prob = _problem(power, _known)
    sol = solve_rh(prob)
    assert len(solvability_conditions(sol)) == power
    # data built from an analytic solution satisfy the conditions
    assert np.max(np.abs(sol.conditions)) < 1e-11
    assert real_conditions(sol).shape == (2 * power - 1, 1)
    z = np.array([0.0, 0.3 + 0.4j, -0.7, 0.9j])
    assert np.max(np.abs(sol.T(z)[:, 0] - _known(R * z))) < 1e-10


def test_negative_index_family_contains_solution():
    prob = _problem(-1, _known)
    sol = solve_rh(prob)
    assert sol.n_free == 3 and len(sol.conditions) == 0
    z = np.array([0.0, 0.3 + 0.4j, -0.7, 0.9j, 0.5 - 0.5j])
    base = sol.T(z)[:, 0]
    free = sol.T_free(z)
    c, *_ = np.linalg.lstsq(np.concatenate([free.real, free.imag]),
                            np.concatenate([(_known(R * z) - base).real, (_known(R * z) - base).imag]),
                            rcond=None)
    assert np.max(np.abs(base + free @ c - _known(R * z))) < 1e-10
    t = np.exp(1j * prob.cmap.phi)
    assert np.max(np.abs((1j * prob.U[:, None] * sol.T_free(t)).real)) < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_solution_is_linear_in_data(a, b):
    prob = _problem(0)
    sol = solve_rh(prob)
    z = np.array([0.2 - 0.1j, 0.6])
    w2 = a * prob.w[:, 0] + b * prob.w[:, 1]
    prob2 = RHProblem(prob.cmap, prob.contour, prob.x, prob.y, prob.U, w2[:, None], [])
    prob2.chi = compute_index(prob2)
    one = solve_rh(prob2).T(z)[:, 0]
    # affine columns: index 0 is the constant, index 1 the coefficient of the unknown
    both = sol.T(z)
    assert np.max(np.abs(one - (a * both[:, 0] + b * both[:, 1]))) < 1e-12


def test_coarse_sampling_detected():
    cmap = solve_theodorsen(Circle(), 16, 1e-14)
    x = cmap.boundary()
    prob = RHProblem(cmap, Circle(), x, np.zeros(16), (x / R) ** 12, np.ones((16, 1)), [])
    with pytest.raises(BVPError):
        compute_index(prob)


def test_cauchy_coefficients_of_polynomial():
    co = np.array([1.0, -2.0, 0.5, 3.0])
    fun = lambda x: np.polynomial.polynomial.polyval(x, co)
    c = cauchy_coeffs(fun, 0.0, 0.4, range(6))
    assert np.allclose(c, [1, -2, 0.5, 3, 0, 0], atol=1e-13)
    # expansion about another centre: Taylor coefficients at 0.3
    c = cauchy_coeffs(fun, 0.3, 0.2, range(2))
    d = np.polynomial.polynomial.polyder(co)
    assert c[0] == pytest.approx(fun(0.3), abs=1e-13)
    assert c[1] == pytest.approx(np.polynomial.polynomial.polyval(0.3, d), abs=1e-12)


# ---------------------------------------------------------------- the example walk

def test_example_walk_index_and_conditions(ra_solution):
    g = ra_solution.g_side.sol
    assert g.chi == -2
    assert g.problem.poles == []
    rows = ra_solution.g_side.conditions()
    # net real constraints: -2 chi - 1 once the free parameters are counted
    assert len(rows) - g.n_free == -2 * g.chi - 1
    assert np.max(np.abs(evaluate(rows, ra_solution.u))) <= 1e-8
    assert ra_solution.residuals["solvability"] <= 1e-8


def test_example_walk_boundary_condition(ra_solution):
    side = ra_solution.g_side
    prob = side.sol.problem
    t = np.exp(1j * prob.cmap.phi)
    f = evaluate(side.lift(side.sol.T(t)), ra_solution.u)
    w = evaluate(side.lift(prob.w), ra_solution.u)
    assert np.max(np.abs((1j * prob.U * f).real - w)) < 1e-7
    # w is real by construction; U is a pure ratio of known functions
    assert np.all(np.isfinite(prob.U))


def test_g0_real_on_real_axis(ra_solution):
    x = np.linspace(-0.3, 0.9, 9)
    g = ra_solution.g0(x)
    assert np.max(np.abs(g.imag)) < 1e-10


def test_derivatives_at_zero_on_known_solution():
    sol = solve_rh(_problem(2, _known))
    d = g0_derivatives_at_zero(sol, 3)[:, 0]
    assert np.allclose(d, [0.5, 0.2, 0.0, -0.6], atol=1e-10)
    with pytest.raises(BVPError):
        g0_derivatives_at_zero(sol, 1, radius=R)


def test_example_walk_taylor_data(ra_solution):
    r = 0.5 * float(np.min(ra_solution.g_side.contour.rho))
    a = cauchy_coeffs(ra_solution.g0, 0.0, r, range(4))
    b = cauchy_coeffs(ra_solution.g0, 0.0, r / 2, range(4))
    assert np.max(np.abs(a - b)) < 1e-9
    # g0(0) is the probability of the corner cell (N1, 0)
    assert a[0].real == pytest.approx(ra_solution.corner[-1, 0], abs=1e-10)
