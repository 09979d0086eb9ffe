#!/usr/bin/env python3
"""
fasris CLI

Outage-probability experiments for RIS-aided fluid antenna receivers.
- point / sweep-ports / sweep-size / sweep-elements: estimator tables
- blockfit: block-correlation fit report for one geometry
Failures print one canonical JSON error line to stderr and exit 1.
"""
import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from fasris.canonical import canonicalize
from fasris.config import ConfigError, ExperimentConfig, load_experiment
from fasris.corr import MU_MODES, PortGeometry
from fasris.experiment import ResultRow, run_sweep, show_blockfit
from fasris.export import FORMATS, ExportError, emit

logger = logging.getLogger("fasris.cli")

DEFAULT_SWEEPS = {
    "ports": list(range(5, 55, 5)),
    "size": [1.0, 2.0, 3.0, 4.0, 5.0],
    "elements": list(range(20, 220, 20)),
}


def _error_line(error: Exception) -> str:
    return canonicalize({
        "error": type(error).__name__,
        "field": getattr(error, "field", None),
        "message": str(getattr(error, "message", error)),
    })


def _configure_logging(args) -> None:
    level = logging.WARNING
    if getattr(args, "verbose", False):
        level = logging.DEBUG
    elif getattr(args, "quiet", False):
        level = logging.ERROR
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _overrides(args) -> Dict[str, Dict[str, Any]]:
    """Block-structured overrides from the flags that were given."""
    defaults = {
        "num_ports": args.ports,
        "normalized_size": args.size,
        "num_elements": args.elements,
        "target_rate": args.rate,
        "transmit_power": args.power,
        "mu": args.mu,
        "mu_mode": args.mu_mode,
        "eigen_threshold": args.eigen_threshold,
        "chebyshev_nodes": args.nodes,
    }
    simulation = {"seed": args.seed, "trials": args.trials, "workers": args.workers}
    output = {"path": args.out, "format": args.format}
    overrides = {
        "defaults": {k: v for k, v in defaults.items() if v is not None},
        "simulation": {k: v for k, v in simulation.items() if v is not None},
        "output": {k: v for k, v in output.items() if v is not None},
    }
    if getattr(args, "estimators", None):
        overrides["estimators"] = args.estimators
    return {block: values for block, values in overrides.items() if values}


def _load(args, kind: str) -> ExperimentConfig:
    overrides = _overrides(args)
    values = getattr(args, "values", None)
    if kind == "point":
        overrides["sweep"] = {"kind": "point", "values": []}
    elif values:
        overrides["sweep"] = {"kind": kind, "values": values}
    config = load_experiment(args.config, overrides)
    if config.sweep.kind != kind:
        overrides["sweep"] = {"kind": kind, "values": DEFAULT_SWEEPS[kind]}
        config = load_experiment(args.config, overrides)
    return config


def _print_rows(rows: List[ResultRow]) -> None:
    print(f"{'Estimator':<9} {'M':<5} {'N':<4} {'W':<6} {'P_out':<13} {'Error':<11} {'Time(ms)':<10} {'Status':<20}")
    print("=" * 85)
    for row in rows:
        print(
            f"{row.estimator:<9} {row.M:<5} {row.N:<4} {row.W:<6g} {row.probability:<13.6e} "
            f"{row.error_estimate:<11.3e} {row.wall_time_ms:<10.1f} {row.status:<20}"
        )


def _run(args, kind: str) -> int:
    config = _load(args, kind)
    logger.info("Run id %s", config.run_id)
    rows = run_sweep(config, record_timing=not args.no_timing)
    emit(rows, config.output.format, config.output.path)
    if config.output.path is not None:
        print(f"✅ {len(rows)} rows written to {config.output.path}")
        print(f"Run id: {config.run_id}")
        print()
        _print_rows(rows)
    return 0


def cmd_point(args):
    """Evaluate the selected estimators at a single operating point."""
    return _run(args, "point")


def cmd_sweep_ports(args):
    """Sweep the number of ports N."""
    return _run(args, "ports")


def cmd_sweep_size(args):
    """Sweep the normalized aperture W."""
    return _run(args, "size")


def cmd_sweep_elements(args):
    """Sweep the number of RIS elements M."""
    return _run(args, "elements")


def cmd_blockfit(args):
    """Print the block-correlation fit for one geometry."""
    config = load_experiment(args.config, _overrides(args))
    report = show_blockfit(
        PortGeometry(config.system.geometry.num_ports, config.system.geometry.normalized_size),
        settings=config.settings,
    )
    print(report.format())
    return 0


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Experiment JSON file (default: packaged defaults)")
    common.add_argument("--seed", type=int, help="Base seed for Monte Carlo and MVN replicates")
    common.add_argument("--trials", type=int, help="Monte Carlo trials per point")
    common.add_argument("--workers", type=int, help="Monte Carlo worker processes")
    common.add_argument("--out", help="Output file (default: stdout)")
    common.add_argument("--format", choices=list(FORMATS), help="Output format (default: csv)")
    common.add_argument("--no-timing", dest="no_timing", action="store_true",
                        help="Write wall_time_ms as 0 for byte-identical reruns")
    common.add_argument("--ports", type=int, help="Number of ports N")
    common.add_argument("--size", type=float, help="Normalized aperture W (wavelengths)")
    common.add_argument("--elements", type=int, help="Number of RIS elements M")
    common.add_argument("--rate", type=float, help="Target rate R (bit/s/Hz)")
    common.add_argument("--power", type=float, help="Transmit power P_S (W)")
    common.add_argument("--mu", type=float, help="Intra-block correlation mu (used as given with --mu-mode fixed)")
    common.add_argument("--mu-mode", dest="mu_mode", choices=list(MU_MODES),
                        help="fixed: use --mu; matched: derive mu from the principal eigenvalue mass")
    common.add_argument("--eigen-threshold", dest="eigen_threshold", type=float,
                        help="Principal eigenvalue threshold lambda_th")
    common.add_argument("--nodes", type=int, help="Gauss-Chebyshev nodes U")
    common.add_argument("--estimators", nargs="+", choices=["CLT", "CLT-BC", "CLT-IID", "MC"],
                        help="Estimators to run")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    verbosity.add_argument("--quiet", "-q", action="store_true", help="Errors only")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fasris",
        description="fasris - Outage probability of RIS-aided fluid antenna systems"
    )
    common = _common_parser()
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    # === point ===
    parser_point = subparsers.add_parser("point", parents=[common], help="Evaluate one operating point")
    parser_point.set_defaults(func=cmd_point)

    # === sweeps ===
    parser_ports = subparsers.add_parser("sweep-ports", parents=[common], help="Sweep the number of ports N")
    parser_ports.add_argument("--values", nargs="+", type=int, help="N values (default: 5 10 ... 50)")
    parser_ports.set_defaults(func=cmd_sweep_ports)

    parser_size = subparsers.add_parser("sweep-size", parents=[common], help="Sweep the aperture W")
    parser_size.add_argument("--values", nargs="+", type=float, help="W values (default: 1 2 3 4 5)")
    parser_size.set_defaults(func=cmd_sweep_size)

    parser_elements = subparsers.add_parser("sweep-elements", parents=[common], help="Sweep the RIS size M")
    parser_elements.add_argument("--values", nargs="+", type=int, help="M values (default: 20 40 ... 200)")
    parser_elements.set_defaults(func=cmd_sweep_elements)

    # === blockfit ===
    parser_blockfit = subparsers.add_parser("blockfit", parents=[common], help="Show the block-correlation fit")
    parser_blockfit.set_defaults(func=cmd_blockfit)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entrypoint."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not hasattr(args, "func"):
        parser.print_help()
        return 1

    _configure_logging(args)
    try:
        return args.func(args)
    except (ConfigError, ExportError, ValueError) as e:
        print(_error_line(e), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
