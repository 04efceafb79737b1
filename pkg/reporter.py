import asyncio
import json
import logging
import math
from typing import Any, Dict, Iterable, List, Optional

import aiofiles
import click
import numpy as np
import pandas as pd

logger = logging.getLogger("Dust.Reporter")

REPORT_FORMAT = "dust-report"


def _to_builtin(value: Any):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if hasattr(value, "value"):
        return value.value
    return str(value)


def _json_safe(value: Any):
    """Builtin copy of a payload with non-finite floats as null"""
    if isinstance(value, dict):
        return {key: _json_safe(item) for key, item in value.items()}
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, (list, tuple)):
        return [_json_safe(item) for item in value]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


class ReportWriter:
    """
    Line-delimited JSON report: one header line, then record / summary / fit lines.
    Every line carries a "kind" field; records are kept in memory for the summary.
    """

    def __init__(self, path: Optional[str] = None, version: int = 1):
        self.path = path
        self.version = version
        self.lines: List[str] = []
        self.records: List[Dict[str, Any]] = []
        self._lock: Optional[asyncio.Lock] = None

    def format_line(self, kind: str, payload: Dict[str, Any]) -> str:
        entry = {"kind": kind}
        entry.update(payload)
        return json.dumps(_json_safe(entry), default=_to_builtin, sort_keys=True, allow_nan=False)

    def header(self, command: str, config: Dict[str, Any]):
        self.add("header", {"format": REPORT_FORMAT, "version": self.version, "command": command, "config": config})

    def add(self, kind: str, payload: Dict[str, Any]):
        self.lines.append(self.format_line(kind, payload))
        if kind == "record":
            self.records.append(payload)

    def reset_file(self):
        """Truncate the target and write the lines collected so far"""
        if self.path:
            with open(self.path, "w", encoding="utf-8") as f:
                f.writelines(line + "\n" for line in self.lines)

    async def append(self, kind: str, payload: Dict[str, Any]):
        """Add a line and append it to the file; safe under concurrent sweeps"""
        if self._lock is None:
            self._lock = asyncio.Lock()
        async with self._lock:
            self.add(kind, payload)
            if self.path:
                async with aiofiles.open(self.path, "a", encoding="utf-8") as f:
                    await f.write(self.lines[-1] + "\n")

    def write(self):
        """Write every collected line to the target file, or stdout without one"""
        if self.path:
            self.reset_file()
            logger.debug(f"📊 Report written: {self.path} ({len(self.lines)} lines)")
        else:
            for line in self.lines:
                click.echo(line)

    def export_csv(self, path: str, records: Optional[Iterable[Dict[str, Any]]] = None):
        frame = pd.DataFrame(list(records if records is not None else self.records))
        frame.to_csv(path, index=False)
        logger.debug(f"📊 Raw records exported: {path}")


def read_report(path: str) -> List[Dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
