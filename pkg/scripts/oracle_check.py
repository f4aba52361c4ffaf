"""Analytic solve against the truncated chain on a set of models: index,
corner sup-norm, mean queue lengths and timings, one JSON line per model."""
import argparse
import json
import time

import numpy as np

from quarterplane.metrics import expected_queue_lengths
from quarterplane.oracle import truncated_stationary
from quarterplane.solver import SolverConfig, solve_model
from quarterplane.templates import build_template

MODELS = [
    ("ra-example", {"lam": 0.1, "a": 0.6}),
    ("ra-example", {"lam": 0.15, "a": 0.5, "N": 3}),
    ("ra-example", {"lam": 0.05, "a": 0.7, "N": 5}),
    ("policy", {"policy": "DGPS", "lam1": 0.25, "lam2": 0.2, "mu1": 0.9, "mu2": 0.8, "N1": 3, "N2": 2,
                "beta": 0.4}),
    ("ra-geometric", {"lam1": 0.3, "lam2": 0.4, "r1": 0.5, "r2": 0.6, "N1": 2, "N2": 3}),
    ("policy", {"policy": "Bernoulli", "lam1": 0.2, "lam2": 0.25, "mu1": 0.8, "mu2": 0.7}),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--j", type=int, default=1000)
    args = ap.parse_args()
    for name, params in MODELS:
        spec = build_template(name, params)
        t0 = time.perf_counter()
        sol = solve_model(spec, SolverConfig(J=args.j))
        t1 = time.perf_counter()
        ts = truncated_stationary(spec)
        N1, N2 = spec.N1, spec.N2
        e, ref = np.array(expected_queue_lengths(sol)), np.array(expected_queue_lengths(ts))
        print(json.dumps({
            "template": name, "params": params, "chi": sol.chi,
            "corner_sup": float(np.abs(sol.corner - ts.pi[:N1 + 1, :N2 + 1]).max()),
            "mean_rel": float(np.max(np.abs(e - ref) / ref)),
            "solvability": sol.residuals["solvability"], "tail": ts.tail,
            "solve_s": round(t1 - t0, 2), "truncation_s": round(time.perf_counter() - t1, 2)}))


if __name__ == "__main__":
    main()
