"""
Shared command-line plumbing: flag parsing, config overrides, report writing
and the error-to-exit-code mapping
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple

from pydantic import BaseModel

from app.core.exceptions import InputFormatError, LabError
from app.schemas.lab import RunConfig
from app.schemas.reports import ErrorReport
from app.services.lab_service import LabService, load_run_config, validate_run_config
from app.services.reports import write_report, write_text

logger = logging.getLogger(__name__)

Action = Callable[[LabService], Tuple[BaseModel, Dict[str, str]]]


def parse_growth(text: str) -> Dict[str, Any]:
    """'power:a=0.5,p=1' -> {'name': 'power', 'a': 0.5, 'p': 1.0}"""
    name, _, params = text.partition(":")
    spec: Dict[str, Any] = {"name": name.strip()}
    for item in filter(None, (p.strip() for p in params.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise InputFormatError("growth parameter must look like key=value", item=item)
        try:
            spec[key.strip()] = float(value)
        except ValueError:
            raise InputFormatError("growth parameter is not a number", item=item)
    return spec


def parse_pair(text: str, what: str) -> Tuple[float, float]:
    """'a:b' -> (a, b)"""
    left, sep, right = text.partition(":")
    try:
        if not sep:
            raise ValueError(text)
        return float(left), float(right)
    except ValueError:
        raise InputFormatError(f"{what} must look like a:b", value=text)


def parse_ball(text: str) -> Dict[str, Any]:
    """'x[,y]:r' -> {'center': [x, y], 'radius': r}"""
    center, sep, radius = text.rpartition(":")
    try:
        if not sep:
            raise ValueError(text)
        return {"center": [float(c) for c in center.split(",")], "radius": float(radius)}
    except ValueError:
        raise InputFormatError("ball must look like x[,y]:r", value=text)


def add_common_flags(parser: argparse.ArgumentParser) -> None:
    """Flags every command accepts"""
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--seed", type=int, help="Seed for random ball families and sampling")
    parser.add_argument("--threads", type=int, help="Worker threads")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--preset", help="Built-in input function")
    parser.add_argument("--csv", help="Input function as CSV")
    parser.add_argument("--scale", type=float, help="Multiplier applied to the input")
    parser.add_argument("--growth", help="Growth function, name[:k=v,...]")
    parser.add_argument("--family", help="Ball family: coarse, fine or random")
    parser.add_argument("--dict-size", type=int, help="Number of test functions")
    parser.add_argument("--dict-m", type=int, help="Smoothness order of the dictionary")
    parser.add_argument("--scales", help="Dictionary scale range t_min:t_max")
    parser.add_argument("--resolution", type=int, help="Grid points per axis")


def _apply_overrides(data: Dict[str, Any], args: argparse.Namespace) -> None:
    if getattr(args, "preset", None):
        data["input"].update(preset=args.preset, csv=None)
    if getattr(args, "csv", None):
        data["input"].update(csv=args.csv, preset=None)
    if getattr(args, "scale", None) is not None:
        data["input"]["scale"] = args.scale
    if getattr(args, "growth", None):
        data["growth"] = parse_growth(args.growth)
    if getattr(args, "family", None):
        data["family"]["kind"] = args.family
    if getattr(args, "dict_size", None) is not None:
        data["dictionary"]["size"] = args.dict_size
    if getattr(args, "dict_m", None) is not None:
        data["dictionary"]["m"] = args.dict_m
    if getattr(args, "scales", None):
        data["dictionary"]["scales"] = parse_pair(args.scales, "scales")
    if getattr(args, "resolution", None) is not None:
        data["grid"]["resolution"] = args.resolution
    for key in ("out", "seed", "threads"):
        if getattr(args, key, None) is not None:
            data[key] = getattr(args, key)
    args.apply_options(data, args)


def resolve_run(args: argparse.Namespace) -> RunConfig:
    """Load the JSON config and layer the command-line flags on top"""
    run = load_run_config(args.config)
    data = run.model_dump(by_alias=True)
    _apply_overrides(data, args)
    return validate_run_config(data)


def report_error(error: LabError) -> int:
    report = ErrorReport(**error.to_dict())
    sys.stderr.write(report.model_dump_json(indent=2) + "\n")
    return error.exit_code


def execute(args: argparse.Namespace, command: str, action: Action) -> int:
    """
    Run one command and map failures to exit codes

    Args:
        args: Parsed flags
        command: Command name, also the report file stem
        action: Produces the report and extra artifacts from a LabService

    Returns:
        Process exit code
    """
    try:
        logger.info(f"Running {command}")
        run = resolve_run(args)
        lab = LabService(run)
        report, artifacts = action(lab)

        out_dir = Path(run.out or ".")
        for name, text in artifacts.items():
            write_text(out_dir / name, text)
        path = write_report(out_dir / f"{command}.json", report)
        print(path)
        logger.info(f"{command} finished: {path}")
        return 0

    except LabError as e:
        logger.error(f"{command} failed: {e.message}")
        return report_error(e)
    except Exception as e:
        logger.error(f"{command} failed unexpectedly: {e}")
        return report_error(LabError(str(e), error=type(e).__name__))


def set_option(data: Dict[str, Any], section: str, key: str, value: Optional[Any]) -> None:
    if value is not None:
        data[section][key] = value
