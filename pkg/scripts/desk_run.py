"""End-to-end simulator pipeline run at desk scale, followed by the report."""
from __future__ import annotations

import argparse
import json
import time

from ospo.backend import CorruptionParams
from ospo.pipeline import STAGES, PipelineConfig, emit_report, run_stage, validate_manifest


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--per-category", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    cats = ("Attribute", "Layout", "NonSpatial", "Complex")
    cfg = PipelineConfig(seed=args.seed, out_dir=args.out, workers=args.workers,
                         categories={c: args.per_category for c in cats},
                         corruption=CorruptionParams(0.2, 0.2, 0.05, 0.05),
                         simpo_preset="toy", simpo={"epochs": args.epochs})
    for stage in STAGES:
        t0 = time.perf_counter()
        summary = run_stage(stage, cfg, resume=True)
        print(f"{stage:8s} {time.perf_counter() - t0:6.2f}s {summary}")
    print(f"violations: {len(validate_manifest(cfg.manifest_path))}")
    print(json.dumps(emit_report(cfg.manifest_path), indent=2))


if __name__ == "__main__":
    main()
