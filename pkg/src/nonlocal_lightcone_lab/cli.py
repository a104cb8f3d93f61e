from __future__ import annotations

import argparse
import logging
import os
import time
from pathlib import Path
from typing import List, Optional

import yaml
from dotenv import load_dotenv
from pydantic import ValidationError

from .config import ScenarioConfig, config_hash, load_config
from .logging_config import configure_logging
from .runner import run_scenario
from .scenarios import KNOWN_SCENARIOS, is_known_scenario, list_builtin_scenarios, scenario_config


logger = logging.getLogger("nonlocal_lightcone_lab")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2


def _add_source_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", nargs="?", default="", help="Path to a scenario YAML/JSON file")
    p.add_argument(
        "--preset",
        default="",
        help=f"Use a builtin scenario instead of a file ({', '.join(sorted(KNOWN_SCENARIOS))})",
    )
    p.add_argument("--points", type=int, default=None, help="Override lattice.points_per_axis (e.g. 64 for a quick run)")


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nonlocal_lightcone_lab")
    p.add_argument(
        "--env-file",
        default=".env",
        help="Path to a dotenv file (default: .env). If missing, env vars must already be set.",
    )

    sub = p.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="Run a scenario: assemble, bounds, cutoffs, propagate, checks")
    _add_source_args(run)
    run.add_argument("--out-dir", default="", help="Output root (default: output.directory, env LAB_OUT_DIR)")
    run.add_argument("--threads", type=int, default=None, help="Worker pool size for assembly and checks")
    run.add_argument("--seed", type=int, default=None, help="Seed for randomized checks")
    run.add_argument("--no-plots", action="store_true", help="Skip SVG plots")

    sub.add_parser("list", help="List builtin scenario presets")

    validate = sub.add_parser("validate", help="Validate a scenario without running it")
    _add_source_args(validate)
    return p


def _load_scenario(args: argparse.Namespace) -> ScenarioConfig:
    if args.preset and args.config:
        raise ValueError("give either a config path or --preset, not both")
    if args.preset:
        if not is_known_scenario(args.preset):
            raise ValueError(f"unknown preset {args.preset!r} (known: {', '.join(sorted(KNOWN_SCENARIOS))})")
        return scenario_config(args.preset, points=args.points)
    if not args.config:
        raise ValueError("a config path or --preset is required")
    cfg = load_config(args.config)
    if args.points is not None:
        cfg = _with_overrides(cfg, {"lattice": {**cfg.lattice.model_dump(mode="json"), "points_per_axis": args.points}})
    return cfg


def _with_overrides(cfg: ScenarioConfig, updates: dict) -> ScenarioConfig:
    # Re-validate so overrides obey the same rules as the file.
    return ScenarioConfig.model_validate({**cfg.model_dump(mode="json"), **updates})


def _run_overrides(args: argparse.Namespace) -> dict:
    updates: dict = {}
    if args.threads is not None:
        updates["threads"] = args.threads
    if args.seed is not None:
        updates["seed"] = args.seed
    return updates


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)

    env_path = Path(args.env_file)
    if env_path.exists():
        load_dotenv(env_path)

    # Default logging: can be overridden once config is loaded.
    configure_logging(level=os.getenv("LOG_LEVEL", "INFO"))

    if args.cmd == "list":
        print(list_builtin_scenarios())
        return EXIT_OK

    try:
        cfg = _load_scenario(args)
        if args.cmd == "run":
            updates = _run_overrides(args)
            if updates:
                cfg = _with_overrides(cfg, updates)
    except (FileNotFoundError, ValidationError, ValueError, yaml.YAMLError) as e:
        logger.error("Invalid scenario: %s", e)
        return EXIT_CONFIG_ERROR

    configure_logging(level=cfg.logging.level, file_path=cfg.logging.file_path)

    if args.cmd == "validate":
        logger.info("Scenario %s is valid (checks=%d hash=%s)", cfg.name, len(cfg.checks), config_hash(cfg))
        return EXIT_OK

    if args.cmd == "run":
        t0 = time.time()
        manifest = run_scenario(cfg, out_dir=args.out_dir or None, plots=False if args.no_plots else None)
        if manifest.failure is not None:
            logger.error("Scenario %s failed: %s (seconds=%.2f)", cfg.name, manifest.failure, time.time() - t0)
            return EXIT_CONFIG_ERROR
        failing = sorted(name for name, ok in manifest.summary.items() if not ok)
        if failing:
            logger.error("Scenario %s: failing checks %s", cfg.name, ", ".join(failing))
            return EXIT_CHECK_FAILED
        logger.info("Scenario %s: %d/%d checks passed (seconds=%.2f)", cfg.name, manifest.checks_passed, manifest.checks_total, time.time() - t0)
        return EXIT_OK

    raise AssertionError("Unhandled command")
