"""Gap-density histogram of selected pairs from an existing run's manifest."""
from __future__ import annotations

import argparse

from ospo.analysis import conditional_mean_local, gap_density_report, gaps_from_records
from ospo.manifest import read_records


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("manifest")
    ap.add_argument("--csv", default=None)
    args = ap.parse_args()
    hist = gap_density_report(args.manifest, args.csv)
    gaps = gaps_from_records(read_records(args.manifest))
    print(f"pairs: {len(gaps)}")
    print(f"mean local gap where global gap < 0.5: {conditional_mean_local(gaps):.4f}")
    for row in hist.rows():
        g0, g1, l0, l1, count, dens = row
        if count:
            print(f"global [{g0:+.2f}, {g1:+.2f})  local [{l0:+.2f}, {l1:+.2f})  {count:5d}  {dens:.3f}")


if __name__ == "__main__":
    main()
