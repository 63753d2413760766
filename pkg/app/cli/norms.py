"""
Norm and index commands
"""

import argparse
import logging
from typing import Any, Dict

from app.cli.common import execute, parse_ball, set_option
from app.schemas.lab import NormKind

logger = logging.getLogger(__name__)


def _norm_options(data: Dict[str, Any], args: argparse.Namespace) -> None:
    set_option(data, "norm", "kind", args.kind)
    set_option(data, "norm", "q", args.q)
    if args.ball:
        data["norm"]["ball"] = parse_ball(args.ball)
    if args.export_maximal:
        data["norm"]["export_maximal"] = True


def _no_options(data: Dict[str, Any], args: argparse.Namespace) -> None:
    return None


def cmd_norm(args: argparse.Namespace) -> int:
    """
    Compute one quasi-norm of the input

    Args:
        args: Parsed flags

    Returns:
        Exit code; 2 for malformed input, 3 for precondition violations
    """
    return execute(args, "norm", lambda lab: lab.run_norm())


def cmd_indices(args: argparse.Namespace) -> int:
    """Estimate i, I, q and m of the growth function"""
    return execute(args, "indices", lambda lab: (lab.run_indices(), {}))


def register(subparsers: argparse._SubParsersAction, parents: list) -> None:
    norm = subparsers.add_parser("norm", parents=parents, help="Luxembourg, Hardy, ball and BMO norms")
    norm.add_argument("--kind", choices=[k.value for k in NormKind], help="Quantity to compute")
    norm.add_argument("--q", type=float, help="Order for lq-ball")
    norm.add_argument("--ball", help="Ball x[,y]:r for indicator and lq-ball")
    norm.add_argument("--export-maximal", action="store_true", help="Write f* as CSV and SVG")
    norm.set_defaults(handler=cmd_norm, apply_options=_norm_options)

    indices = subparsers.add_parser("indices", parents=parents, help="Estimate growth-function indices")
    indices.set_defaults(handler=cmd_indices, apply_options=_no_options)
