"""File helpers: atomic text writes, JSON loading and CSV export with path context."""
from __future__ import annotations

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any

import pandas as pd

from core.errors import InvalidInputError, LabError

logger = logging.getLogger(__name__)


def atomic_write_text(path: str | Path, text: str) -> Path:
    """Write via a sibling temp file and ``os.replace``."""
    path = Path(path)
    if not path.parent.is_dir():
        raise LabError(f"cannot write {path}: directory {path.parent} does not exist")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise LabError(f"cannot write {path}: {exc}") from exc
    logger.debug("wrote %s (%d bytes)", path, len(text))
    return path


def read_json(path: str | Path) -> Any:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InvalidInputError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path} is not valid JSON: {exc}") from exc


def write_frame_csv(frame: pd.DataFrame, path: str | Path) -> Path:
    return atomic_write_text(path, frame.to_csv(index=False, float_format="%.17g"))
