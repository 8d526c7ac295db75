"""
Run artifacts: CSV tables, JSON reports, transcripts, the per-run manifest and error reports.

Nothing written here carries a timestamp, so identical arguments and seed give byte-identical
CSV and JSON files.
"""
import json
import logging
import traceback
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from config.settings import get_settings

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
ERROR_NAME = "error.json"


def _to_jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def dumps(data) -> str:
    return json.dumps(data, sort_keys=True, indent=2, default=_to_jsonable)


class ReportWriter:
    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.written: List[str] = []

    def _path(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        self.written.append(name)
        return path

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        path = self._path(name)
        frame.to_csv(path, index=False)
        logger.debug("Wrote %d rows to %s", len(frame), path)
        return path

    def write_json(self, name: str, data) -> Path:
        path = self._path(name)
        path.write_text(dumps(data) + "\n", encoding="utf-8")
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self._path(name)
        path.write_text(text, encoding="utf-8")
        return path

    def record(self, path: Path):
        """
        Registers a file written by someone else (figures) for the manifest
        """
        self.written.append(Path(path).name)

    def write_manifest(self, command: str, config: dict, status: str, result: Optional[dict] = None) -> Path:
        manifest = {
            "command": command,
            "config": config,
            "settings": get_settings(),
            "status": status,
            "files": sorted(set(self.written)),
        }
        if result is not None:
            manifest["result"] = result
        path = self.out_dir / MANIFEST_NAME
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps(manifest) + "\n", encoding="utf-8")
        return path


def error_payload(error: BaseException) -> dict:
    return {"error": type(error).__name__, "message": str(error)}


def write_error_report(out_dir, error: BaseException) -> Optional[Path]:
    """
    Saves the error and its traceback as error.json; returns None when the directory is unwritable
    """
    payload = error_payload(error)
    payload["traceback"] = traceback.format_exception(type(error), error, error.__traceback__)
    try:
        path = Path(out_dir)
        path.mkdir(parents=True, exist_ok=True)
        target = path / ERROR_NAME
        target.write_text(dumps(payload) + "\n", encoding="utf-8")
        return target
    except OSError as e:
        logger.error("Could not save error report: %s", e)
        return None
