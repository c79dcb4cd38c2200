"""``ospo`` command line.

    ospo <stage> --config cfg.json [--resume] [--workers N]
    ospo all --config cfg.json [--resume] [--workers N]
    ospo report --config cfg.json
    ospo validate --config cfg.json
    ospo compare --config cfg.json [--prompts N]

Exit codes: 0 ok, 1 other failure, 2 config error, 3 backend failure,
4 validation violations.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from ospo.errors import BackendError, ConfigError, OspoError

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_BACKEND, EXIT_INVALID = 0, 1, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    from ospo.pipeline import STAGES

    ap = argparse.ArgumentParser(prog="ospo", description="Object-centric preference pair pipeline")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in STAGES + ("all",):
        p = sub.add_parser(name, help=f"run the {name} stage" if name != "all" else "run every stage in order")
        p.add_argument("--config", required=True)
        p.add_argument("--resume", action="store_true", help="continue a partially completed stage")
        p.add_argument("--workers", type=int, default=None, help="samples processed concurrently")
    p = sub.add_parser("report", help="write report.md and selection.csv")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p = sub.add_parser("validate", help="check manifest invariants")
    p.add_argument("--config", required=True)
    p = sub.add_parser("compare", help="Best-of-N vs OSPO indistinguishable-pair comparison (simulator)")
    p.add_argument("--config", required=True)
    p.add_argument("--prompts", type=int, default=200)
    p.add_argument("--category", default="Attribute")
    p.add_argument("--out", default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _load(args):
    from ospo.pipeline import PipelineConfig

    cfg = PipelineConfig.load(args.config)
    if getattr(args, "workers", None):
        cfg = dataclasses.replace(cfg, workers=args.workers)
    return cfg


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True, default=str))


def _run(args) -> int:
    from ospo import pipeline

    cfg = _load(args)
    if args.command in pipeline.STAGES:
        _emit(pipeline.run_stage(args.command, cfg, resume=args.resume))
        return EXIT_OK
    if args.command == "all":
        for stage in pipeline.STAGES:
            _emit(pipeline.run_stage(stage, cfg, resume=args.resume))
        return EXIT_OK
    if args.command == "report":
        summary = pipeline.emit_report(cfg.manifest_path, args.out)
        _emit({"report": str(Path(args.out or cfg.out_dir) / "report.md"), "kinds": summary["kinds"],
               "discarded": summary["discarded"], "total": summary["total"]})
        return EXIT_OK
    if args.command == "validate":
        violations = pipeline.validate_manifest(cfg.manifest_path, cfg.vocab_size, cfg.simpo_config().max_len)
        for v in violations:
            _emit(v)
        _emit({"violations": len(violations)})
        return EXIT_INVALID if violations else EXIT_OK
    if args.command == "compare":
        from ospo.analysis import compare_pipelines, write_comparison
        from ospo.backend import SimulatorBackend
        from ospo.prompts import KeywordPools, generate_base_prompts

        if cfg.backend != "simulator":
            raise ConfigError("compare needs the simulator backend (ground-truth answers)")
        pools = KeywordPools.builtin()
        backend = SimulatorBackend(pools, cfg.corruption, cfg.vocab_size)
        prompts = generate_base_prompts(args.category, args.prompts, pools, cfg.seed)
        rep = compare_pipelines(prompts, cfg.corruption, backend, cfg.seed, n=cfg.best_of_n, decode=cfg.decode,
                                pools=pools, epsilon=cfg.epsilon)
        _emit(write_comparison(rep, args.out or Path(cfg.out_dir) / "compare"))
        return EXIT_OK
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except OspoError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
