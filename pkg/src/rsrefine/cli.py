"""Command-line entry point: ``translate``, ``metrics`` and ``replay``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, RefineError
from .pipeline import (
    ModelSpec,
    RunConfig,
    build_pool,
    load_config,
    measure_program,
    replay_config,
    run_translation,
)
from .refiner.providers import ModelPool, ReplayProvider

EXIT_OK, EXIT_NO_REFINEMENT, EXIT_ENV = 0, 1, 2
DEFAULT_MODELS = "model-a,model-b"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rsrefine", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("translate", help="refine every function of a project")
    t.add_argument("--project", type=Path)
    t.add_argument("--tests", type=Path)
    t.add_argument("--config", type=Path)
    t.add_argument("--out", type=Path)
    t.add_argument("--report", type=Path)
    t.add_argument("--seed", type=int)
    t.add_argument("--mock", type=Path, help="scripted mock (JSON) or recorded transcript (JSONL) for every model")
    t.add_argument("--models", default=None, help=f"comma-separated model ids without a config (default {DEFAULT_MODELS})")
    t.add_argument("--transcript", type=Path, help="where to write the generate-call log")
    t.add_argument("--tree-dump", type=Path, help="directory for per-function search trees")

    m = sub.add_parser("metrics", help="safety ratio of a project against a baseline project")
    m.add_argument("--project", type=Path, required=True)
    m.add_argument("--baseline", type=Path, required=True)
    m.add_argument("--lint", action="store_true", help="also count linter warnings and report idiomaticity")

    r = sub.add_parser("replay", help="re-run a recorded translation from its transcript")
    r.add_argument("--transcript", type=Path, required=True)
    r.add_argument("--out", type=Path)
    r.add_argument("--report", type=Path)
    r.add_argument("--record", type=Path, help="write the replayed run's own transcript here")
    return p


def _translate_config(args) -> RunConfig:
    overrides = {
        "project_dir": args.project,
        "tests_file": args.tests,
        "output_dir": args.out,
        "report_path": args.report,
        "transcript_path": args.transcript,
        "tree_dump_dir": args.tree_dump,
    }
    if args.config:
        config = load_config(args.config, **overrides)
    else:
        if args.project is None:
            raise ConfigError("--project is required without --config")
        ids = (args.models or DEFAULT_MODELS).split(",")
        config = RunConfig(
            project_dir=args.project,
            output_dir=args.out or Path("refined"),
            report_path=args.report or Path("report.json"),
            tests_file=args.tests,
            models=tuple(ModelSpec(i.strip(), kind="mock") for i in ids if i.strip()),
            transcript_path=args.transcript,
            tree_dump_dir=args.tree_dump,
        )
        if args.mock is None:
            raise ConfigError("without --config, a --mock file must supply the models")
    if args.seed is not None:
        config.search = dataclasses.replace(config.search, seed=args.seed)
    return config


def _run(config: RunConfig, pool: ModelPool) -> int:
    config.check()
    outcome = run_translation(config, pool=pool)
    project = outcome.report.project
    print(
        f"refined {outcome.report.refined_count}/{len(outcome.report.per_function)} functions; "
        f"SR={project.SR} FCR={project.FCR} FRR={project.FRR} TPR={project.TPR}"
    )
    print(f"report: {config.report_path}")
    return outcome.exit_code


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "translate":
            config = _translate_config(args)
            return _run(config, build_pool(config, offline=args.mock))
        if args.command == "replay":
            config = replay_config(
                args.transcript, output_dir=args.out, report_path=args.report, transcript_path=args.record,
            )
            if args.record is None:
                # never overwrite the transcript being replayed
                config.transcript_path = None
            provider = ReplayProvider.from_file(args.transcript)
            return _run(config, ModelPool({m.id: provider for m in config.models}))
        if args.command == "metrics":
            print(json.dumps(measure_program(args.project, args.baseline, lint=args.lint), indent=2, sort_keys=True))
            return EXIT_OK
    except (RefineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV
    return EXIT_ENV


if __name__ == "__main__":
    sys.exit(main())
