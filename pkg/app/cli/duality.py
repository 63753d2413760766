"""
BMO and multiplier commands
"""

import argparse
import logging
from typing import Any, Dict

from app.cli.common import execute, set_option

logger = logging.getLogger(__name__)


def _bmo_options(data: Dict[str, Any], args: argparse.Namespace) -> None:
    set_option(data, "bmo", "kind", args.kind)
    set_option(data, "bmo", "weight", args.weight)
    set_option(data, "bmo", "truncate", args.truncate)


def _multiplier_options(data: Dict[str, Any], args: argparse.Namespace) -> None:
    if args.corpus:
        data["multiplier"]["corpus"] = [{"preset": name} for name in args.corpus]


def cmd_bmo(args: argparse.Namespace) -> int:
    """BMO^phi and BMO^log norms of the input over the ball family"""
    return execute(args, "bmo", lambda lab: (lab.run_bmo(), {}))


def cmd_multiplier(args: argparse.Namespace) -> int:
    """Sup and log-oscillation norms of the input and its empirical multiplier ratio"""
    return execute(args, "multiplier", lambda lab: (lab.run_multiplier(), {}))


def register(subparsers: argparse._SubParsersAction, parents: list) -> None:
    bmo = subparsers.add_parser("bmo", parents=parents, help="Mean-oscillation norms")
    bmo.add_argument("--kind", choices=["phi", "log", "both"], help="Norms to compute")
    bmo.add_argument("--weight", choices=["radius", "volume"], help="Logarithmic weight")
    bmo.add_argument("--truncate", type=float, help="Also report the norm of the clamp to [-N, N]")
    bmo.set_defaults(handler=cmd_bmo, apply_options=_bmo_options)

    multiplier = subparsers.add_parser("multiplier", parents=parents, help="Pointwise multiplier check")
    multiplier.add_argument("--corpus", nargs="+", help="Preset names of the BMO corpus")
    multiplier.set_defaults(handler=cmd_multiplier, apply_options=_multiplier_options)
