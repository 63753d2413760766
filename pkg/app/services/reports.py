"""
Atomic report writing
"""

import logging
import os
import tempfile
from pathlib import Path
from typing import Union

from pydantic import BaseModel

from app.core.exceptions import LabError

logger = logging.getLogger(__name__)


def write_text(path: Union[str, Path], text: str) -> Path:
    """Write text through a temporary file in the target directory and rename it into place"""
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
                handle.write(text)
            os.replace(tmp, target)
        except Exception:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as e:
        logger.error(f"Error writing {target}: {e}")
        raise LabError("cannot write output", path=str(target), reason=str(e))
    logger.debug(f"Wrote {target}")
    return target


def write_report(path: Union[str, Path], report: BaseModel) -> Path:
    """Serialize a report model as indented JSON"""
    return write_text(path, report.model_dump_json(indent=2) + "\n")
