#!/usr/bin/env python3
"""
Run sparse GP experiments from the command line

    python run_experiment.py fit --config my.yaml --out results --seed 3
    python run_experiment.py regime-study --jobs 4
    python run_experiment.py emit-plots results/sweep-add-seed0 --render
"""

import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional

from pipelines.experiment_config import EXPERIMENTS, LOG_LEVELS, load_experiment_config
from pipelines.plot_emitter import emit_plots
from pipelines.results_writer import load_manifest, run_directory
from pipelines.studies import run
from sparsegp.errors import DataIngestionError, UsageError

logger = logging.getLogger('run_experiment')

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARTIAL = 3
EXIT_DATA = 4

STUDY_HELP = {
    'fit': 'train one or more methods and report metrics',
    'sweep-add': 'trained M=7 models plus a one-point addition sweep',
    'clump-study': 'random-subset initialization and a clump report',
    'recover-zx': 'start at Z = X and compare objectives before and after training',
    'regime-study': 'sweep the number of inducing inputs on a synthetic draw',
    'ard-study': 'ARD protocol with five training variants',
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Sparse GP experiment runner')
    commands = parser.add_subparsers(dest='command', required=True)

    for name in EXPERIMENTS:
        study = commands.add_parser(name, help=STUDY_HELP[name])
        study.add_argument('--config', help='YAML file merged over the experiment defaults')
        study.add_argument('--out', help='output root directory')
        study.add_argument('--seed', type=int, help='base seed')
        study.add_argument('--jobs', type=int, help='worker threads (-1 for all cores)')
        study.add_argument('--log-level', choices=LOG_LEVELS, type=str.upper)

    plots = commands.add_parser('emit-plots', help='write plot data and plotting scripts for a run')
    plots.add_argument('manifest', help='manifest.yaml or the run directory containing it')
    plots.add_argument('--out', help='directory to write plots/ into (default: the run directory)')
    plots.add_argument('--render', action='store_true', help='also render PNG figures')
    plots.add_argument('--log-level', choices=LOG_LEVELS, type=str.upper)
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    if args.seed is not None:
        overrides['seed'] = args.seed
    if args.jobs is not None:
        overrides['jobs'] = args.jobs
    if args.out is not None:
        overrides['output_dir'] = args.out
    if args.log_level is not None:
        overrides['logging'] = {'level': args.log_level}
    return overrides


def run_study(args: argparse.Namespace) -> int:
    try:
        config = load_experiment_config(args.command, args.config, _overrides(args))
    except UsageError as e:
        logger.error(f"❌ Invalid configuration: {e}")
        return EXIT_USAGE
    logging.getLogger().setLevel(config.log_level)

    try:
        manifest = run(config)
    except DataIngestionError as e:
        logger.error(f"❌ Data error: {e}")
        return EXIT_DATA
    except UsageError as e:
        logger.error(f"❌ Invalid configuration: {e}")
        return EXIT_USAGE

    out_dir = run_directory(config.output_dir, config.name, config.seed)
    if manifest.failed_runs:
        names = ', '.join(str(r.get('name')) for r in manifest.failed_runs)
        logger.warning(f"⚠️ Partial results in {out_dir}; failed runs: {names}")
        return EXIT_PARTIAL
    logger.info(f"✅ Results in {out_dir}")
    return EXIT_OK


def run_emit_plots(args: argparse.Namespace) -> int:
    try:
        manifest = load_manifest(args.manifest)
    except FileNotFoundError as e:
        logger.error(f"❌ {e}")
        return EXIT_DATA
    except ValueError as e:
        logger.error(f"❌ Unreadable manifest: {e}")
        return EXIT_USAGE

    out_dir = args.out or (args.manifest if os.path.isdir(args.manifest) else os.path.dirname(args.manifest))
    try:
        emit_plots(manifest, out_dir or '.', render=args.render)
    except ValueError as e:
        logger.error(f"❌ Cannot emit plots: {e}")
        return EXIT_USAGE
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level or 'INFO',
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )
    if args.command == 'emit-plots':
        return run_emit_plots(args)
    return run_study(args)


if __name__ == '__main__':
    sys.exit(main())
