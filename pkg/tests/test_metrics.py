import csv

import numpy as np
import pytest

from conftest import solved, truncated
from quarterplane.bvp import cauchy_coeffs
from quarterplane.metrics import (MetricsError, boundary_derivative_at_one, compute_metrics,
                                  expected_queue_lengths, monotone_flags, sweep, write_csv)
from quarterplane.model import build_ra_model
from quarterplane.solver import SolveError
from quarterplane.templates import build_template


def test_symmetric_walk_has_equal_means(ra_solution):
    e1, e2 = expected_queue_lengths(ra_solution)
    assert e1 == pytest.approx(e2, rel=1e-10)


@pytest.mark.parametrize("name", ["ra-example", "dgps"])
def test_means_match_truncation(name):
    a = expected_queue_lengths(solved(name))
    b = expected_queue_lengths(truncated(name))
    assert np.allclose(a, b, rtol=1e-8)


def test_report_fields(ra_spec):
    rep = compute_metrics(ra_spec)
    assert rep.engine == "bvp" and not rep.fallback
    assert sum(rep.shares.values()) == pytest.approx(1.0, abs=1e-9)
    assert rep.EQ_total == pytest.approx(rep.EQ1 + rep.EQ2)
    assert rep.p_empty == pytest.approx(truncated("ra-example").pi[0, 0], abs=1e-10)
    assert rep.diagnostics["chi"] == [-2, -2]


def test_boundary_derivative_through_the_map(ra_solution):
    # g0'(1) through the conformal map against a Cauchy integral about 1
    val, der = boundary_derivative_at_one(ra_solution, 0)
    r = ra_solution.g_side.one_radius()
    c = cauchy_coeffs(ra_solution.g0, 1.0, r, [0, 1], 256)
    assert val == pytest.approx(c[0], abs=1e-10)
    assert der == pytest.approx(c[1], abs=1e-8)


def test_fallback_is_flagged():
    # a priority policy has a nonnegative corner drift: the analytic route declines
    spec = build_template("policy", {"policy": "HOL", "lam1": 0.2, "lam2": 0.2, "mu1": 0.8, "mu2": 0.8})
    rep = compute_metrics(spec)
    assert rep.engine == "truncation" and rep.fallback
    assert rep.diagnostics["tail"] < 1e-10
    with pytest.raises(SolveError):
        compute_metrics(spec, fallback=False)


def test_transient_walk_has_no_metrics():
    spec = build_ra_model(0.7, 0.7, 2, 2, r1=0.5, r2=0.5)
    with pytest.raises(MetricsError):
        compute_metrics(spec)


def test_sweep_of_one_point_equals_single_solve(ra_spec, tmp_path):
    cols, rows = sweep("ra-example", {"lam": [0.1], "a": [0.6]})
    rep = compute_metrics(ra_spec)
    assert len(rows) == 1
    assert rows[0]["EQ1"] == pytest.approx(rep.EQ1, rel=1e-12)
    path = tmp_path / "s.csv"
    write_csv(path, cols, rows)
    with open(path) as fh:
        back = list(csv.DictReader(fh))
    assert float(back[0]["p_empty"]) == pytest.approx(rep.p_empty, rel=1e-12)
    assert back[0]["engine"] == "bvp"


def test_sweep_rows_are_deterministic_and_ordered():
    grid = {"lam": [0.05, 0.1], "a": [0.6, 0.5]}
    c1, r1 = sweep("ra-example", grid)
    c2, r2 = sweep("ra-example", grid)
    assert r1 == r2
    assert [(r["lam"], r["a"]) for r in r1] == [(0.05, 0.6), (0.05, 0.5), (0.1, 0.6), (0.1, 0.5)]
    flags = monotone_flags(r1, "lam", ["a"], "EQ_total")
    assert flags == {(0.6,): True, (0.5,): True}


def test_monotone_flags_detect_decrease():
    rows = [{"k": 1, "g": "a", "v": 2.0}, {"k": 2, "g": "a", "v": 1.0}, {"k": 3, "g": "a", "v": ""},
            {"k": 1, "g": "b", "v": 1.0}, {"k": 2, "g": "b", "v": 1.0}]
    assert monotone_flags(rows, "k", ["g"], "v") == {("a",): False, ("b",): True}


def test_failed_point_is_recorded():
    _, rows = sweep("ra-example", {"lam": [0.6], "a": [0.9]})
    assert rows[0]["error"] and rows[0]["EQ1"] == ""
