"""
Decomposition and certification commands
"""

import argparse
import logging
from typing import Any, Dict

from app.cli.common import execute, parse_ball, set_option
from app.schemas.lab import DecomposeMode

logger = logging.getLogger(__name__)


def _levels(text: str):
    return text if text == "auto" else int(text)


def _decompose_options(data: Dict[str, Any], args: argparse.Namespace) -> None:
    set_option(data, "decompose", "mode", args.mode)
    set_option(data, "decompose", "lambda", args.height)
    set_option(data, "decompose", "degree", args.degree)
    set_option(data, "decompose", "levels", args.levels)
    set_option(data, "decompose", "q", args.q)
    set_option(data, "decompose", "mollify", args.mollify)
    if args.ball:
        data["decompose"]["ball"] = parse_ball(args.ball)


def _certify_options(data: Dict[str, Any], args: argparse.Namespace) -> None:
    set_option(data, "certify", "kind", args.kind)
    set_option(data, "certify", "q", args.q)
    set_option(data, "certify", "s", args.degree)
    if args.ball:
        data["certify"]["ball"] = parse_ball(args.ball)


def cmd_decompose(args: argparse.Namespace) -> int:
    """
    Decompose the input and write the manifest with its Whitney overlay

    Args:
        args: Parsed flags

    Returns:
        Exit code; 4 when a re-checked invariant fails
    """
    return execute(args, "decompose", lambda lab: lab.run_decompose())


def cmd_certify(args: argparse.Namespace) -> int:
    """Certify the input as an atom; failing clauses still exit 0"""
    return execute(args, "certify", lambda lab: (lab.run_certify(), {}))


def register(subparsers: argparse._SubParsersAction, parents: list) -> None:
    decompose = subparsers.add_parser("decompose", parents=parents, help="CZ, multi-level or finite decomposition")
    decompose.add_argument("--mode", choices=[m.value for m in DecomposeMode], help="Pipeline")
    decompose.add_argument("--lambda", dest="height", type=float, help="Height for cz mode")
    decompose.add_argument("--degree", type=int, help="Moment degree s")
    decompose.add_argument("--levels", type=_levels, help="auto or a maximum level count")
    decompose.add_argument("--q", type=float, help="Atom order for finite mode")
    decompose.add_argument("--ball", help="Support ball x[,y]:r for finite mode")
    decompose.add_argument("--mollify", type=float, help="Mollification scale for finite mode")
    decompose.set_defaults(handler=cmd_decompose, apply_options=_decompose_options)

    certify = subparsers.add_parser("certify", parents=parents, help="Measure atom clauses")
    certify.add_argument("--kind", choices=["atom", "log-atom"], help="Atom kind")
    certify.add_argument("--q", type=float, help="Atom order")
    certify.add_argument("--degree", type=int, help="Moment degree s")
    certify.add_argument("--ball", help="Declared ball x[,y]:r")
    certify.set_defaults(handler=cmd_certify, apply_options=_certify_options)
