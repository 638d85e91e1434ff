#!/usr/bin/env python3
"""
LaserFlow - Fundus Temperature Estimation CLI
=============================================
Command-line interface for the laser-heating estimation benchmark.

Verbs:
- run: full pipeline (model, reduction, truth, EKF/MHE, metrics)
- reduce: reduction only, writes model.json
- simulate: truth stream only, optionally from a cached model.json
- compare: tabulate the summaries of finished runs
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from src.core.errors import ComparisonError, ConfigError
from src.harness.compare import compare_runs
from src.harness.config import LOG_LEVEL_ENV, OUTPUT_ROOT_ENV, apply_environment, load_config
from src.harness.pipeline import ExperimentPipeline, PipelineResult

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger('LaserFlow')

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


class LaserFlowCLI:
    """Command-line interface for estimation experiments."""

    def __init__(self, progress: bool = False, log_file: bool = False):
        self.progress = progress
        self.log_file = log_file

    def _pipeline(self, config_path: str, model_path: Optional[str] = None,
                  export_matrices: bool = False) -> ExperimentPipeline:
        config = apply_environment(load_config(config_path))
        pipeline = ExperimentPipeline(
            config,
            model_path=Path(model_path) if model_path else None,
            progress=self.progress,
            export_matrices=export_matrices,
        )
        if self.log_file:
            handler = logging.FileHandler(pipeline.run_dir / "run.log", encoding="utf-8")
            handler.setFormatter(logging.Formatter(LOG_FORMAT))
            logging.getLogger().addHandler(handler)
        return pipeline

    def _report(self, result: PipelineResult) -> int:
        if result.exit_code == EXIT_OK:
            print(f"Artifacts written to {result.run_dir}")
        else:
            print(f"Run failed in stage '{result.failed_stage}', see {result.run_dir / 'error.json'}",
                  file=sys.stderr)
        return result.exit_code

    def run(self, config_path: str, model_path: Optional[str] = None) -> int:
        return self._report(self._pipeline(config_path, model_path).run())

    def reduce(self, config_path: str, export_matrices: bool = False) -> int:
        return self._report(self._pipeline(config_path, export_matrices=export_matrices).run_reduction())

    def simulate(self, config_path: str, model_path: Optional[str] = None) -> int:
        return self._report(self._pipeline(config_path, model_path).run_simulation())

    def compare(self, run_dirs: List[str], output: Optional[str], name: str) -> int:
        output_root = output or os.getenv(OUTPUT_ROOT_ENV, "runs")
        try:
            directory = compare_runs(run_dirs, output_root, name)
        except ComparisonError as e:
            logger.error(f"Comparison failed: {e}")
            return EXIT_FAILED
        print((directory / "summary.txt").read_text(encoding="utf-8"), end="")
        return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='laserflow',
        description='LaserFlow - Fundus temperature estimation during retinal laser heating',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog='''
Examples:
  # Full benchmark with the default configuration
  %(prog)s run configs/default.json

  # Reduce once, then reuse the model for several runs
  %(prog)s reduce configs/default.json --export-matrices
  %(prog)s run configs/horizon_sweep.json --model runs/default/model.json

  # Truth stream only
  %(prog)s simulate configs/noise_free.json

  # Compare two finished runs
  %(prog)s compare runs/default runs/r_sweep
        '''
    )
    parser.add_argument('--verbose', '-v', action='store_true',
                        help='Enable verbose logging')
    parser.add_argument('--progress', action='store_true',
                        help='Show progress bars for simulation and estimation loops')
    parser.add_argument('--log-file', action='store_true',
                        help='Also write the log to run.log inside the run directory')

    subparsers = parser.add_subparsers(dest='command', required=True)

    run_parser = subparsers.add_parser('run', help='Run the full experiment pipeline')
    run_parser.add_argument('config', help='Path to the JSON run configuration')
    run_parser.add_argument('--model', help='Reuse a reduced model document (model.json)')

    reduce_parser = subparsers.add_parser('reduce', help='Assemble and reduce the model only')
    reduce_parser.add_argument('config', help='Path to the JSON run configuration')
    reduce_parser.add_argument('--export-matrices', action='store_true',
                               help='Export A, b_i and c_i in Matrix Market format')

    simulate_parser = subparsers.add_parser('simulate', help='Generate the truth stream only')
    simulate_parser.add_argument('config', help='Path to the JSON run configuration')
    simulate_parser.add_argument('--model', help='Reduced model document (model.json)')

    compare_parser = subparsers.add_parser('compare', help='Compare finished runs')
    compare_parser.add_argument('runs', nargs='+', help='Run directories')
    compare_parser.add_argument('--output', '-o', help='Output root (default: LASERFLOW_OUTPUT_ROOT or runs)')
    compare_parser.add_argument('--name', default='comparison', help='Comparison directory name')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the LaserFlow CLI."""
    load_dotenv()
    args = build_parser().parse_args(argv)

    level = getattr(logging, os.getenv(LOG_LEVEL_ENV, 'INFO').upper(), logging.INFO)
    if args.verbose or not isinstance(level, int):
        level = logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)

    cli = LaserFlowCLI(progress=args.progress, log_file=args.log_file)
    try:
        if args.command == 'run':
            return cli.run(args.config, args.model)
        if args.command == 'reduce':
            return cli.reduce(args.config, args.export_matrices)
        if args.command == 'simulate':
            return cli.simulate(args.config, args.model)
        return cli.compare(args.runs, args.output, args.name)
    except ConfigError as e:
        logger.error(str(e))
        return EXIT_CONFIG


if __name__ == '__main__':
    sys.exit(main())
