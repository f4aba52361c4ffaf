"""Metric sweeps over the random-access example: total mean backlog against
the arrival rate for several transmission levels, and the empty probability
against the saturation level."""
import argparse
import json
from pathlib import Path

from quarterplane.metrics import monotone_flags, sweep, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/sweeps")
    ap.add_argument("--jobs", type=int, default=2)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    lam = [0.02, 0.05, 0.08, 0.1, 0.12, 0.15, 0.18, 0.2]
    cols, rows = sweep("ra-example", {"a": [0.5, 0.6, 0.7], "lam": lam}, jobs=args.jobs)
    write_csv(out / "backlog_vs_lam.csv", cols, rows)
    flags = {"EQ_total nondecreasing in lam": {str(k[0]): v for k, v in
                                              monotone_flags(rows, "lam", ["a"], "EQ_total").items()}}

    cols, rows = sweep("ra-example", {"lam": [0.05, 0.1, 0.15, 0.2], "a": [0.6], "N": [2, 3, 4, 5]},
                       jobs=args.jobs)
    write_csv(out / "empty_vs_N.csv", cols, rows)
    flags["p_empty nondecreasing in N"] = {str(k[0]): v for k, v in
                                           monotone_flags(rows, "N", ["lam"], "p_empty").items()}
    (out / "monotone.json").write_text(json.dumps(flags, indent=2))
    print(json.dumps(flags, indent=2))


if __name__ == "__main__":
    main()
