"""CSV and JSON readers and writers for bode data, traces, tables and documents."""

import csv
import io
import json
import logging
import os
import tempfile
from typing import TYPE_CHECKING, Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .describing_function import FrequencyResponse
from .model_core import ModelError

if TYPE_CHECKING:
    from .sim_engine import SimulationTrace

logger = logging.getLogger(__name__)

BODE_COLUMNS = ("freq_hz", "mag_db", "phase_deg")
BASELINE_COLUMNS = ("linear_mag_db", "linear_phase_deg")
TRACE_COLUMNS = ("t_s", "r_m", "y_m", "e_m", "u", "reset")


def _number(value: Any) -> str:
    """Shortest round-tripping text of a float."""
    return repr(float(value))


def write_text(path: str, text: str) -> None:
    """Write to a temporary file in the target directory, then rename over the target."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


class _CsvText:
    """Accumulates CSV rows in memory so files are written in one atomic step."""

    def __init__(self, columns: Sequence[str]) -> None:
        self._buffer = io.StringIO()
        self._writer = csv.writer(self._buffer, lineterminator="\n")
        self._writer.writerow(columns)

    def add(self, values: Sequence[Any]) -> None:
        self._writer.writerow(values)

    def text(self) -> str:
        return self._buffer.getvalue()


def bode_rows(
    response: FrequencyResponse, baseline: Optional[FrequencyResponse] = None
) -> Tuple[List[str], List[Dict[str, float]]]:
    """
    Columns and rows of a frequency sweep: freq_hz, mag_db, phase_deg.

    Args:
        response: Sweep to tabulate
        baseline: Optional linear sweep on the same grid, added as two extra columns

    Raises:
        ModelError: If the baseline grid differs from the response grid
    """
    columns = list(BODE_COLUMNS)
    if baseline is not None:
        if len(baseline.omegas) != len(response.omegas) or not np.allclose(
            baseline.omegas, response.omegas
        ):
            raise ModelError("Baseline sweep must share the response grid")
        columns += BASELINE_COLUMNS
    freq_hz = response.grid.hz
    mag, phase = response.mag_db, response.phase_deg
    rows = []
    for k in range(len(freq_hz)):
        row = {"freq_hz": float(freq_hz[k]), "mag_db": float(mag[k]), "phase_deg": float(phase[k])}
        if baseline is not None:
            row["linear_mag_db"] = float(baseline.mag_db[k])
            row["linear_phase_deg"] = float(baseline.phase_deg[k])
        rows.append(row)
    return columns, rows


def write_bode_csv(
    path: str, response: FrequencyResponse, baseline: Optional[FrequencyResponse] = None
) -> int:
    """
    Write a frequency sweep as freq_hz, mag_db, phase_deg.

    Returns:
        Number of data rows written
    """
    columns, rows = bode_rows(response, baseline)
    count = write_rows_csv(path, columns, rows)
    logger.debug(f"Wrote {count} bode rows to {path}")
    return count


def read_bode_csv(path: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Read freq_hz, mag_db, phase_deg columns (extra columns are ignored).

    Raises:
        ModelError: Missing file, missing columns or a malformed row (with its line number)
    """
    if not os.path.exists(path):
        raise ModelError(f"Bode file not found: {path}")
    freq, mag, phase = [], [], []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = [c for c in BODE_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ModelError(f"{path}: missing columns {', '.join(missing)}")
        for row in reader:
            try:
                freq.append(float(row["freq_hz"]))
                mag.append(float(row["mag_db"]))
                phase.append(float(row["phase_deg"]))
            except (TypeError, ValueError) as e:
                raise ModelError(f"{path}:{reader.line_num}: {e}")
    if len(freq) < 2:
        raise ModelError(f"{path}: at least two rows are needed")
    return np.array(freq), np.array(mag), np.array(phase)


def write_trace_csv(path: str, trace: "SimulationTrace") -> int:
    """Write a simulation trace as t_s, r_m, y_m, e_m, u, reset (0/1)."""
    reset_flags = np.zeros(len(trace.t), dtype=int)
    reset_flags[list(trace.reset_indices)] = 1
    out = _CsvText(TRACE_COLUMNS)
    for k in range(len(trace.t)):
        out.add(
            [
                _number(trace.t[k]),
                _number(trace.r[k]),
                _number(trace.y[k]),
                _number(trace.e[k]),
                _number(trace.u[k]),
                int(reset_flags[k]),
            ]
        )
    write_text(path, out.text())
    return len(trace.t)


def rows_to_csv(columns: Sequence[str], rows: Iterable[Dict[str, Any]]) -> str:
    """CSV text of table rows; floats in shortest round-trip form, missing cells empty."""
    out = _CsvText(columns)
    for row in rows:
        cells = []
        for column in columns:
            value = row.get(column)
            if value is None:
                cells.append("")
            elif isinstance(value, (float, np.floating)):
                cells.append(_number(value))
            else:
                cells.append(str(value))
        out.add(cells)
    return out.text()


def write_rows_csv(path: str, columns: Sequence[str], rows: Iterable[Dict[str, Any]]) -> int:
    """Write table rows atomically and return the number of data rows."""
    rows = list(rows)
    write_text(path, rows_to_csv(columns, rows))
    return len(rows)


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def dumps_json(document: Any) -> str:
    return json.dumps(document, indent=2, sort_keys=True, default=_plain) + "\n"


def write_json(path: str, document: Any) -> None:
    """Atomically write a JSON document with sorted keys."""
    write_text(path, dumps_json(document))


def load_json(path: str) -> Dict[str, Any]:
    """
    Load a JSON object.

    Raises:
        ModelError: Missing file, invalid JSON (with line and column) or a non-object root
    """
    if not os.path.exists(path):
        raise ModelError(f"File not found: {path}")
    with open(path) as f:
        try:
            document = json.load(f)
        except json.JSONDecodeError as e:
            raise ModelError(f"{path}:{e.lineno}:{e.colno}: {e.msg}")
    if not isinstance(document, dict):
        raise ModelError(f"{path}: expected a JSON object")
    return document
