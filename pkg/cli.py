#!/usr/bin/env python3
"""
Conelab command line

    python cli.py run <recipe> key=value ... [config=<file>]
    python cli.py list
    python cli.py check
"""

import argparse
import logging
import sys
from typing import Dict, List, Optional

from config import Config
from experiment_runner import ExperimentRunner, UsageError
from utils.config_manager import ConfigManager, coerce_value, config_manager

EXIT_OK, EXIT_INVARIANT, EXIT_USAGE = 0, 1, 2


def parse_pairs(pairs: List[str]) -> Dict[str, str]:
    """Split `key=value` tokens; later tokens win"""
    out = {}
    for token in pairs:
        if "=" not in token:
            raise UsageError(f"expected key=value, got '{token}'")
        key, value = token.split("=", 1)
        key = key.strip()
        if not key:
            raise UsageError(f"empty key in '{token}'")
        out[key] = value.strip()
    return out


def build_params(recipe: str, pairs: List[str]) -> Dict:
    """Merge a parameter file with command-line pairs (command line wins)"""
    cli_pairs = parse_pairs(pairs)
    manager = ConfigManager(cli_pairs.pop("config", None))
    for key, value in cli_pairs.items():
        manager.set_setting(key, value)
    Config.update_from_manager(manager)

    merged = {k.lower(): v for k, v in manager.file_config.items()}
    merged.update({k.lower(): v for k, v in manager.session_config.items()})
    # settings that only tune Config are not recipe parameters
    for key in Config.OVERRIDABLE:
        merged.pop(key.lower(), None)
    return {k: coerce_value(v) for k, v in merged.items()}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conelab", description="Finite-scale CAT(0) experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one recipe")
    run.add_argument("recipe", choices=sorted(ExperimentRunner.RECIPES))
    run.add_argument("params", nargs="*", metavar="key=value")

    sub.add_parser("list", help="list recipes and their parameters")
    sub.add_parser("check", help="validate the configuration")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    if args.command == "list":
        for name, (required, optional) in sorted(ExperimentRunner.RECIPES.items()):
            extras = ", ".join(f"{k}={v}" for k, v in optional.items())
            print(f"{name}: {' '.join(required)}" + (f" [{extras}]" if extras else ""))
        return EXIT_OK

    if args.command == "check":
        Config.update_from_manager(config_manager)
        status = ExperimentRunner().validate_setup()
        for issue in status["issues"]:
            print(f"⚠️ {issue}")
        print("✅ configuration OK" if status["valid"] else "❌ configuration has problems")
        return EXIT_OK if status["valid"] else EXIT_USAGE

    try:
        params = build_params(args.recipe, args.params)
    except (UsageError, ValueError, FileNotFoundError) as e:
        print(f"❌ {e}")
        return EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if params.get("verbose") is True else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    problems = Config.validate()
    if problems:
        for problem in problems:
            print(f"❌ {problem}")
        return EXIT_USAGE

    result = ExperimentRunner().run(args.recipe, params)
    return result["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
