"""Random-access stability region: drift classification on a grid of arrival
caps, checked against simulated growth.  Writes region.csv and a JSON summary."""
import argparse
import json
import time
from pathlib import Path

import numpy as np

from quarterplane.metrics import write_csv
from quarterplane.stability import agreement, ra_stability_region, simulated_classes
from quarterplane.templates import build_template


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=20, help="grid points per axis")
    ap.add_argument("--horizon", type=float, default=1e7)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/region")
    ap.add_argument("--no-sim", action="store_true", help="skip the simulation check")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    build = lambda c1, c2: build_template("ra-region", {"cap1": c1, "cap2": c2})
    caps1, caps2 = np.linspace(0.01, 0.4, args.n), np.linspace(0.01, 0.3, args.n)

    t0 = time.perf_counter()
    scan = ra_stability_region(build, caps1, caps2)
    rows = list(scan.rows())
    summary = {"convexity": scan.convexity, "near_boundary": int(scan.near_boundary.sum())}
    if not args.no_sim:
        sim = simulated_classes(build, caps1, caps2, horizon=int(args.horizon), seed=args.seed)
        for r, s in zip(rows, sim.ravel()):
            r["simulated"] = s
        summary["agreement"] = agreement(scan, sim)
    write_csv(out / "region.csv", list(rows[0]), rows)
    summary["seconds"] = time.perf_counter() - t0
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=str))
    print(json.dumps(summary, indent=2, default=str))


if __name__ == "__main__":
    main()
