"""
ModelBandit command-line interface

Subcommands:
  synth     synthetic regret benchmark over the three presets
  task      toy-world manipulation runs
  selftest  embedded invariant suite
  config    sample / validate / show configuration files
  info      dependency check

Exit codes: 0 success, 1 runtime or invariant failure, 2 usage error.
"""

import argparse
import json
import logging
import sys
from dataclasses import asdict
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError

from . import __version__
from .config import RunConfig, defaults_for, load_config_file, resolve_config, save_config
from .errors import ConfigError, ModelBanditError
from .experiments.synthetic import PRESETS, run_benchmark
from .experiments.toy_world import SCENARIOS, run_task
from .models import Algorithm, SummaryRow
from .selftest import CASES, FAULTS, INVARIANTS, iter_selftest
from .services.reporter import write_results

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def setup_logging(config: RunConfig) -> None:
    """Setup logging based on configuration"""
    log_level = getattr(logging, config.log_level.upper())

    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)
    root_logger.handlers.clear()

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(log_level)
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    if config.log_file:
        try:
            file_handler = logging.FileHandler(config.log_file)
            file_handler.setLevel(log_level)
            file_handler.setFormatter(formatter)
            root_logger.addHandler(file_handler)
        except OSError as e:
            print(f"Warning: Could not setup file logging: {e}")


class UsageError(Exception):
    """Raised instead of exiting when argparse rejects the command line"""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: error: {message}")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', dest='config_file', help='JSON or YAML config file')
    parser.add_argument('--algorithms', nargs='+', choices=[a.value for a in Algorithm],
                        help='Arm-selection algorithms to run')
    parser.add_argument('--runs', type=int, help='Independent runs per algorithm')
    parser.add_argument('--seed', type=int, help='Base seed')
    parser.add_argument('--jobs', type=int, help='Parallel trials')
    parser.add_argument('--output', '-o', help='Directory for steps.csv, summary.csv and manifest.json')
    parser.add_argument('--xi', type=float, help='Correlation strength of the joint filter')
    parser.add_argument('--sigma-tr-sq', dest='sigma_tr_sq', type=float, help='Transition noise factor')
    parser.add_argument('--sigma-obs-sq', dest='sigma_obs_sq', type=float, help='Observation noise factor')
    parser.add_argument('--v-max-e', dest='v_max_e', type=float, help='Maximum servoing velocity')
    parser.add_argument('--fixed-arm', dest='fixed_arm', type=int, help='Arm pulled by the fixed selector')
    parser.add_argument('--log-level', dest='log_level', help='DEBUG, INFO, WARNING or ERROR')
    parser.add_argument('--log-file', dest='log_file', help='Also log to this file')
    parser.add_argument('--verbose', '-v', action='store_true', help='Verbose output')


def create_parser() -> argparse.ArgumentParser:
    """Create argument parser"""
    parser = _Parser(
        prog='modelbandit',
        description='ModelBandit - bandit-based model selection for deformable object manipulation',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Synthetic regret benchmark, small preset
  python modelbandit_cli.py synth --preset small --runs 100 --pulls 1000 --seed 7

  # Toy-world task with the table-coverage parameters
  python modelbandit_cli.py task --scenario chain-spread --output results/spread

  # Invariant suite
  python modelbandit_cli.py selftest --list
        """
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    subparsers = parser.add_subparsers(dest='command', help='Available commands', parser_class=_Parser)

    synth_parser = subparsers.add_parser('synth', help='Synthetic regret benchmark')
    _add_common(synth_parser)
    synth_parser.add_argument('--preset', choices=list(PRESETS), help='Benchmark preset')
    synth_parser.add_argument('--model-count', dest='model_count', type=int, help='Number of models M')
    synth_parser.add_argument('-n', type=int, help='State dimension')
    synth_parser.add_argument('-m', type=int, help='Control dimension')
    synth_parser.add_argument('--pulls', type=int, help='Pulls per trial')

    task_parser = subparsers.add_parser('task', help='Toy-world manipulation task')
    _add_common(task_parser)
    task_parser.add_argument('--scenario', choices=list(SCENARIOS), help='Task scenario')
    task_parser.add_argument('--steps', type=int, help='Controller iterations per trial')
    task_parser.add_argument('-c', type=float, help='Rotational scale of the command norm')
    task_parser.add_argument('--beta', type=float, help='Obstacle avoidance sharpness')
    task_parser.add_argument('--lam', type=float, help='Stretching threshold (m)')
    task_parser.add_argument('--v-max-o', dest='v_max_o', type=float, help='Maximum avoidance velocity')
    task_parser.add_argument('--gripper-radius', dest='gripper_radius', type=float, help='Gripper sphere radius (m)')
    task_parser.add_argument('--time-step', dest='time_step', type=float, help='World time step (s)')
    task_parser.add_argument('--command-norm-uses-c', dest='command_norm_uses_c',
                             action=argparse.BooleanOptionalAction, default=None,
                             help='Bound the c-scaled command norm instead of the Euclidean one')
    task_parser.add_argument('--similarity-uses-c', dest='similarity_uses_c',
                             action=argparse.BooleanOptionalAction, default=None,
                             help='Use the c-scaled inner product for command similarity')
    task_parser.add_argument('--evaluate-regret', dest='evaluate_regret',
                             action=argparse.BooleanOptionalAction, default=None,
                             help='Replay every model each step to measure regret')

    selftest_parser = subparsers.add_parser('selftest', help='Run the embedded invariant suite')
    selftest_parser.add_argument('--list', action='store_true', help='List invariant names')
    selftest_parser.add_argument('--inject', choices=list(FAULTS), help='Inject a known fault first')
    selftest_parser.add_argument('--cases', type=int, default=CASES,
                                 help=f'Randomized cases per invariant (default: {CASES})')

    config_parser = subparsers.add_parser('config', help='Configuration management')
    config_group = config_parser.add_mutually_exclusive_group(required=True)
    config_group.add_argument('--create-sample', help='Create sample configuration file')
    config_group.add_argument('--validate', help='Validate configuration file')
    config_group.add_argument('--show-defaults', choices=['synth'] + list(SCENARIOS),
                              help='Show default parameters for synth or a task scenario')

    info_parser = subparsers.add_parser('info', help='Show system information')
    info_parser.add_argument('--dependencies', action='store_true', help='Check dependencies')
    return parser


CONFIG_KEYS = set(RunConfig.model_fields)


def parse_config(argv: Sequence[str], config_file: Optional[str] = None) -> RunConfig:
    """Resolve a RunConfig from command-line flags, a config file and scenario defaults

    Raises UsageError for a malformed command line, ConfigError or pydantic's
    ValidationError for invalid values.
    """
    args = create_parser().parse_args(list(argv))
    if not args.command:
        raise UsageError("no command given")
    cli_values: Dict[str, Any] = {k: v for k, v in vars(args).items() if k in CONFIG_KEYS and v is not None}
    path = getattr(args, 'config_file', None) or config_file
    file_values = load_config_file(path) if path else {}
    return resolve_config(cli_values, file_values)


def _describe_validation(error: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in e['loc']) or 'config'}: {e['msg']}" for e in error.errors())


def _print_summary(rows: List[SummaryRow]) -> None:
    print("\n📊 Total regret (mean [std]):")
    for row in rows:
        print(f"   {row.algorithm:<12} {row.mean_total_regret:8.3f} [{row.std_total_regret:.3f}]  ({row.runs} runs)")


def _manifest(config: RunConfig, seeds: Dict[str, List[int]], extra: Dict[str, Any]) -> Dict[str, Any]:
    return {"version": __version__, "config": config.to_flat_dict(), "seeds": seeds, **extra}


def run_synth(config: RunConfig, verbose: bool = False) -> int:
    preset = config.benchmark_preset()
    print(f"🚀 Synthetic benchmark '{preset.name}': M={preset.model_count}, n={preset.n}, m={preset.m}")
    print(f"🔧 {config.runs} runs x {config.pulls} pulls, algorithms: {', '.join(config.algorithms)}")
    result = run_benchmark(preset, config.runs, config.seed, config.algorithm_list(),
                           config.bandit_params(), config.pulls, config.jobs)
    _print_summary(result.summary)
    aborted = [t for t in result.trials if t.aborted]
    if verbose:
        for trial in aborted:
            print(f"   ❌ run {trial.run} {trial.algorithm}: {trial.status}")
    if config.output:
        write_results(result.trials, result.summary, config.output,
                      _manifest(config, result.seeds, {"preset": asdict(preset)}))
        print(f"💾 Results saved to {config.output}")
    return EXIT_FAILURE if aborted else EXIT_OK


def run_task_command(config: RunConfig, verbose: bool = False) -> int:
    scenario = config.scenario or "chain-spread"
    print(f"🚀 Task '{scenario}': {config.runs} run(s) x {config.steps} steps, "
          f"algorithms: {', '.join(config.algorithms)}")
    result = run_task(scenario, config.steps, config.runs, config.seed, config.algorithm_list(),
                      config.controller_config(), config.bandit_params(), config.time_step,
                      config.evaluate_regret, config.jobs)
    for trial in result.trials:
        mark = "❌" if trial.aborted else "✅"
        ratio = trial.final_error / trial.initial_error if trial.initial_error > 0 else 0.0
        print(f"{mark} run {trial.run} {trial.algorithm}: error {trial.initial_error:.4f} -> "
              f"{trial.final_error:.4f} ({100 * ratio:.1f}%)")
        if verbose and trial.aborted:
            print(f"   ⚠️  {trial.status}")
    if config.evaluate_regret:
        _print_summary(result.summary)
    if config.output:
        write_results(result.trials, result.summary, config.output,
                      _manifest(config, result.seeds, {"scenario": scenario}))
        print(f"💾 Results saved to {config.output}")
    return EXIT_FAILURE if any(t.aborted for t in result.trials) else EXIT_OK


def run_selftest_command(args: argparse.Namespace) -> int:
    if args.list:
        for name in INVARIANTS:
            print(name)
        return EXIT_OK
    if args.cases < 1:
        print(f"❌ --cases must be positive, got {args.cases}", file=sys.stderr)
        return EXIT_USAGE
    failures = []
    for result in iter_selftest(args.inject, cases=args.cases):
        if result.passed:
            print(f"✅ {result.name}")
        else:
            print(f"❌ {result.name}: {result.message}")
            failures.append(result.name)
    if failures:
        print(f"\n❌ {len(failures)} invariant(s) failed: {', '.join(failures)}")
        return EXIT_FAILURE
    print(f"\n✅ All {len(INVARIANTS)} invariants hold")
    return EXIT_OK


def handle_config_command(args: argparse.Namespace) -> int:
    """Handle configuration management commands"""
    if args.create_sample:
        sample = resolve_config({"command": "synth", "preset": "small", "output": "results/small"})
        save_config(sample, args.create_sample)
        print(f"✅ Sample configuration written to {args.create_sample}")
        return EXIT_OK
    if args.validate:
        try:
            values = load_config_file(args.validate)
            resolve_config({"command": values.get("command", "synth")}, values)
        except ValidationError as e:
            print(f"❌ Configuration file {args.validate} has errors: {_describe_validation(e)}")
            return EXIT_FAILURE
        except ConfigError as e:
            print(f"❌ Configuration file {args.validate} has errors: {e}")
            return EXIT_FAILURE
        print(f"✅ Configuration file {args.validate} is valid")
        return EXIT_OK
    command = "synth" if args.show_defaults == "synth" else "task"
    scenario = None if command == "synth" else args.show_defaults
    print(json.dumps(defaults_for(command, scenario), indent=2, sort_keys=True))
    return EXIT_OK


def handle_info_command(args: argparse.Namespace) -> int:
    """Handle info command"""
    print(f"ModelBandit {__version__}")
    if not args.dependencies:
        return EXIT_OK
    print("📦 Checking dependencies...")
    missing = []
    for dep_name, module_name in {'numpy': 'numpy', 'scipy': 'scipy', 'pydantic': 'pydantic',
                                  'pyyaml': 'yaml'}.items():
        try:
            __import__(module_name)
            print(f"  ✅ {dep_name}")
        except ImportError:
            print(f"  ❌ {dep_name}")
            missing.append(dep_name)
    if missing:
        print(f"\n❌ Missing core dependencies: {', '.join(missing)}")
        print("Install with: pip install -r requirements-core.txt")
        return EXIT_FAILURE
    print("\n✅ All core dependencies available")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point; returns the process exit code"""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = create_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help and --version
        return int(e.code or 0)
    if not args.command:
        parser.print_help()
        return EXIT_USAGE

    if args.command == 'selftest':
        return run_selftest_command(args)
    if args.command == 'config':
        return handle_config_command(args)
    if args.command == 'info':
        return handle_info_command(args)

    try:
        config = parse_config(argv)
    except ValidationError as e:
        print(f"❌ Invalid configuration: {_describe_validation(e)}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(f"❌ Invalid configuration: {e}", file=sys.stderr)
        return EXIT_USAGE

    setup_logging(config)
    try:
        if config.command == 'synth':
            return run_synth(config, args.verbose)
        return run_task_command(config, args.verbose)
    except ModelBanditError as e:
        logging.error(f"{config.command} failed: {e}")
        return EXIT_FAILURE
    except KeyboardInterrupt:
        print("\n⛔ Interrupted by user")
        return EXIT_FAILURE
