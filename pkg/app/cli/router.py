"""
Command router for the laboratory CLI
"""

import argparse

from app.cli import decompose, duality, norms
from app.cli.common import add_common_flags


def build_parser() -> argparse.ArgumentParser:
    """Parser with every command and its flags"""
    parser = argparse.ArgumentParser(
        prog="hardy-lab",
        description="Numerical laboratory for Musielak-Orlicz Hardy spaces",
    )
    common = argparse.ArgumentParser(add_help=False)
    add_common_flags(common)
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Include all command groups
    for group in (norms, decompose, duality):
        group.register(subparsers, [common])
    return parser
