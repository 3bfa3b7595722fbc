"""
Command-line entry point: `flexoiga run [config] [--out DIR] [--vtk] [--scenario NAME] [--set key=value ...]`
and `flexoiga list`.
"""

import argparse
import logging
import sys
from typing import List, Optional

from .errors import ConfigError, FlexoIGAError, SolverFailureError
from .scenarios import PRESETS, list_presets, load_scenarios, parse_overrides
from .settings import configure_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flexoiga", description="Multi-patch IGA flexoelectric solver")
    parser.add_argument("--log-level", default=None, help="Override FLEXOIGA_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run a scenario file or a built-in scenario")
    run.add_argument("config", nargs="?", default=None, help="Scenario JSON file")
    run.add_argument("--out", default=None, help="Output directory (default FLEXOIGA_OUTPUT_DIR)")
    run.add_argument("--vtk", action="store_true", help="Write VTK field files for every run")
    run.add_argument("--scenario", default=None, help="Scenario name in the file, or a built-in scenario")
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                     help="Dotted override applied before validation, e.g. dg.tau=1e10")

    sub.add_parser("list", help="List built-in scenarios")
    return parser


def _list() -> int:
    for name in list_presets():
        print(f"{name:28s} {PRESETS[name].get('description', '')}")
    return EXIT_OK


def _run(args) -> int:
    # imported here so `list` and argument errors do not build the solver workflow
    from .scenario_workflow import workflow

    scenarios = load_scenarios(args.config, args.scenario, parse_overrides(args.overrides))
    for scn in scenarios:
        result = workflow.run_scenario(scn, args.out, True if args.vtk else None)
        for path in result.files:
            print(path)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        configure_logging(args.log_level.upper() if args.log_level else None)
        if args.command == "list":
            return _list()
        return _run(args)
    except ConfigError as e:
        logger.error(f"Configuration error: {str(e)}")
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailureError as e:
        logger.error(f"Solver failure: {str(e)}", exc_info=True)
        print(str(e), file=sys.stderr)
        return EXIT_SOLVER
    except FlexoIGAError as e:
        logger.error(f"Invalid scenario input: {str(e)}", exc_info=True)
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
