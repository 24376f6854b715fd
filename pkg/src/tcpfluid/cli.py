"""Command-line entry point.

Subcommands pick the experiment mode; every config key doubles as a flag
that overrides the config file.  Exit codes: 0 success, 2 configuration
error, 3 numeric failure (root finding or integration).
"""

from __future__ import annotations

import argparse
import sys

from .dde import IntegrationError
from .experiment import (
    ConfigError,
    KEY_PARSERS,
    build_config,
    read_config_file,
    run_experiment,
)
from .fixedpoint import SolverError

# subcommand -> ExperimentConfig.mode
COMMANDS = {
    "fluid": "fluid",
    "nhpl": "nhpl",
    "compare": "both",
    "stability": "stability",
    "convergence": "convergence",
    "fixed-point": "fixed-point",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tcpfluid",
        description="Fluid-model and event-driven studies of loss-based congestion control.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    help_text = {
        "fluid": "integrate the delay fluid model and write the trajectory CSV",
        "nhpl": "run the event-driven loss simulation and write events + trace CSVs",
        "compare": "run both models and report post-transient means",
        "stability": "report the Lyapunov certificate (Qtilde, lambda_min, basin)",
        "convergence": "write the norm/V/Vdot/bound diagnostics CSV",
        "fixed-point": "solve and report the equilibrium",
    }
    for name, mode in COMMANDS.items():
        p = sub.add_parser(name, help=help_text[name])
        p.set_defaults(mode=mode)
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        for key in KEY_PARSERS:
            if key == "mode":
                continue
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, dest=f"key_{key}", metavar="V", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        raw: dict[str, object] = {}
        if args.config:
            raw.update(read_config_file(args.config))
        for key in KEY_PARSERS:
            value = getattr(args, f"key_{key}", None)
            if value is not None:
                raw[key] = value
        raw["mode"] = args.mode
        config = build_config(raw)
        result = run_experiment(config, args.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, IntegrationError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    print(result.summary)
    for name, path in sorted(result.artifacts.items()):
        print(f"wrote {name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
