"""
Run artifact persistence
========================

Writes CSV and JSON artifacts into one run directory, keeps every path
inside that directory, records a file inventory with SHA-256 digests and
marks failed runs.

CSV files use UTF-8, a header row, '.' as decimal separator and the
shortest round-trip ``repr`` of every float, so identical inputs give
byte-identical files.
"""

import csv
import hashlib
import json
import logging
import math
import re
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from ..core.errors import ArtifactPathError

logger = logging.getLogger(__name__)

FAILED_MARKER = "FAILED"
ERROR_RECORD = "error.json"
MANIFEST = "manifest.json"


def sanitize_name(name: str) -> str:
    """
    Reduce a run or artifact name to ``[A-Za-z0-9._-]``.

    Raises:
        ArtifactPathError: If nothing usable remains
    """
    if not name:
        raise ArtifactPathError("Empty artifact name")
    if "\0" in name:
        raise ArtifactPathError("Artifact name contains null bytes")
    sanitized = re.sub(r"[^A-Za-z0-9._-]", "_", name).strip(". ")
    if not sanitized:
        raise ArtifactPathError(f"Artifact name '{name}' becomes empty after sanitization")
    return sanitized


def format_value(value: Any) -> str:
    """CSV text of a scalar; floats use the round-trip ``repr``."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    number = float(value)
    if math.isnan(number):
        return "nan"
    if math.isinf(number):
        return "inf" if number > 0 else "-inf"
    return repr(number)


def file_digest(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


class ArtifactStore:
    """Owns one run directory and everything written into it."""

    def __init__(self, root: Union[str, Path], run_name: str):
        self.root = Path(root)
        self.run_dir = (self.root / sanitize_name(run_name)).resolve()
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.logger = logging.getLogger(__name__)

    def path_for(self, name: str) -> Path:
        """Validated path of an artifact inside the run directory."""
        safe = sanitize_name(name)
        path = (self.run_dir / safe).resolve()
        if path.parent != self.run_dir:
            raise ArtifactPathError(f"Artifact '{name}' resolves outside {self.run_dir}")
        return path

    def write_csv(self, name: str, header: Sequence[str], columns: Sequence[Iterable[Any]]) -> Path:
        """Write equally long columns under ``header``."""
        columns = [list(column) for column in columns]
        if len(columns) != len(header):
            raise ArtifactPathError(f"{name}: {len(header)} header fields for {len(columns)} columns")
        lengths = {len(column) for column in columns}
        if len(lengths) > 1:
            raise ArtifactPathError(f"{name}: columns have different lengths {sorted(lengths)}")
        path = self.path_for(name)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in zip(*columns):
                writer.writerow([format_value(value) for value in row])
        self.logger.debug(f"Wrote {path.name} ({lengths.pop() if lengths else 0} rows)")
        return path

    def write_rows(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
        """Write row-oriented records under ``header``."""
        columns = [[row[i] for row in rows] for i in range(len(header))]
        return self.write_csv(name, header, columns)

    def write_json(self, name: str, data: Any) -> Path:
        path = self.path_for(name)
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(data, handle, indent=2, sort_keys=True)
            handle.write("\n")
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self.path_for(name)
        path.write_text(text, encoding="utf-8")
        return path

    def mark_failed(self, record: Dict[str, Any]) -> None:
        """Write the machine-readable error record and the FAILED marker."""
        self.write_json(ERROR_RECORD, record)
        self.write_text(FAILED_MARKER, f"{record.get('stage', 'unknown')}: {record.get('message', '')}\n")
        self.logger.error(f"Run marked as failed in stage '{record.get('stage')}': {record.get('message')}")

    def clear_failure(self) -> None:
        for name in (FAILED_MARKER, ERROR_RECORD):
            path = self.run_dir / name
            if path.exists():
                path.unlink()

    def inventory(self) -> Dict[str, str]:
        """SHA-256 digest of every file except the manifest, sorted by name."""
        return {
            path.name: file_digest(path)
            for path in sorted(self.run_dir.iterdir())
            if path.is_file() and path.name != MANIFEST
        }


def read_csv(path: Union[str, Path]) -> Tuple[List[str], Dict[str, np.ndarray]]:
    """
    Read a numeric CSV artifact.

    Returns:
        Tuple of (header, column name -> float array)
    """
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        rows = [row for row in reader if row]
    columns = {}
    for i, name in enumerate(header):
        try:
            columns[name] = np.array([float(row[i]) for row in rows])
        except ValueError:
            columns[name] = np.array([row[i] for row in rows], dtype=object)
    return header, columns
