"""``d2dpower`` command line: analytic, simulate and validate subcommands.

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness
from .analytic import ConvergenceError
from .config import ConfigError, ExperimentConfig
from .core import ParameterError, QuadratureError, RootFindingError
from .simulator import SimulationError

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_NONCONVERGENCE = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="d2dpower", description="Equilibrium D2D transmit-power CDF: analysis and Monte Carlo.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("analytic", "write analytic CDF curves"),
                       ("simulate", "run Monte Carlo drops and compare with the analysis"),
                       ("validate", "run the oracle suite")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", metavar="PATH", help="TOML configuration file")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--seed", type=int, metavar="N", help="override master_seed")
        p.add_argument("--drops", type=int, metavar="N", help="override drops")
        p.add_argument("--threads", type=int, metavar="N", help="worker threads for drops")
        if name == "validate":
            p.add_argument("--inject-fault", choices=["k1_sign_flip"], help=argparse.SUPPRESS)
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(master_seed=args.seed, drops=args.drops, threads=args.threads,
                              output=args.out)


def _run(args) -> int:
    cfg = load_config(args)
    if args.command == "analytic":
        for path in harness.cmd_analytic(cfg, cfg.output):
            print(path)
        return EXIT_OK
    if args.command == "simulate":
        report = harness.cmd_simulate(cfg, cfg.output)
        for pt in report.points:
            print(f"alpha={pt.alpha:g} beta={pt.beta_db:g} dB  KS={pt.ks:.4f}  links={pt.n_samples}  "
                  f"converged={pt.fraction_converged:.1%}  capped={pt.fraction_capped:.1%}")
        for note in report.notes:
            print(f"warning: {note}", file=sys.stderr)
        return EXIT_OK
    report = harness.cmd_validate(cfg, fault=args.inject_fault)
    harness.write_validation(report, cfg.output)
    for check in report.checks:
        print(f"{check.status:>18}  {check.name}  {json.dumps(check.measured, default=float)}"
              + (f"  {check.message}" if check.message else ""))
    if not report.ok:
        print("failed: " + ", ".join(c.name for c in report.failures()), file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConvergenceError as exc:
        tail = ", ".join(f"{r:.3g}" for r in exc.residuals[-5:])
        print(f"error: {exc} (last iterate {exc.last_iterate:.6g}; residuals ... {tail})", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (QuadratureError, RootFindingError, SimulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ConfigError, ParameterError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
