"""Unit tests for CSV and JSON file handling."""

import csv
import io
import json
import os
import tempfile

import numpy as np
import pytest

from cglp_toolbox.describing_function import FrequencyGrid, df_sweep, linear_sweep
from cglp_toolbox.io import (
    BODE_COLUMNS,
    TRACE_COLUMNS,
    bode_rows,
    dumps_json,
    load_json,
    read_bode_csv,
    rows_to_csv,
    write_bode_csv,
    write_json,
    write_text,
    write_trace_csv,
)
from cglp_toolbox.model_core import ElementKind, ElementSpec, ModelError, make_element
from cglp_toolbox.sim_engine import SimulationTrace

GRID = FrequencyGrid.from_hz([0.1, 1.0, 10.0])


@pytest.fixture
def fore():
    return make_element(ElementSpec(kind=ElementKind.GFORE, omega_r=1.0, gamma=0.3))


class TestWriteText:
    """Test atomic text writes."""

    def test_creates_directories_and_replaces(self) -> None:
        """Test nested directories are created and no temporary file remains."""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "a", "b", "out.txt")
            write_text(path, "first\n")
            write_text(path, "second\n")
            with open(path) as f:
                assert f.read() == "second\n"
            assert os.listdir(os.path.dirname(path)) == ["out.txt"]


class TestBode:
    """Test bode tables."""

    def test_rows_with_baseline(self, fore) -> None:
        """Test baseline columns are appended."""
        columns, rows = bode_rows(df_sweep(fore, GRID), linear_sweep(fore, GRID))
        assert columns == list(BODE_COLUMNS) + ["linear_mag_db", "linear_phase_deg"]
        assert len(rows) == 3
        assert rows[1]["freq_hz"] == pytest.approx(1.0)
        # Reset adds phase lead over the linear lag
        assert rows[1]["phase_deg"] > rows[1]["linear_phase_deg"]

    def test_baseline_grid_mismatch(self, fore) -> None:
        """Test error for a baseline on another grid."""
        other = linear_sweep(fore, FrequencyGrid.from_hz([0.1, 1.0]))
        with pytest.raises(ModelError, match="share the response grid"):
            bode_rows(df_sweep(fore, GRID), other)

    def test_write_then_read(self, fore) -> None:
        """Test a written sweep reads back unchanged."""
        response = df_sweep(fore, GRID)
        with tempfile.NamedTemporaryFile(suffix=".csv", delete=False) as f:
            path = f.name

        try:
            assert write_bode_csv(path, response) == 3
            freq, mag, phase = read_bode_csv(path)
            assert np.array_equal(freq, response.grid.hz)
            assert np.array_equal(mag, response.mag_db)
            assert np.array_equal(phase, response.phase_deg)
        finally:
            os.unlink(path)

    def test_read_missing_column(self) -> None:
        """Test error for a file without phase."""
        with tempfile.NamedTemporaryFile(mode="w", suffix=".csv", delete=False) as f:
            f.write("freq_hz,mag_db\n1,0\n2,0\n")
            path = f.name

        try:
            with pytest.raises(ModelError, match="missing columns phase_deg"):
                read_bode_csv(path)
        finally:
            os.unlink(path)

    def test_read_malformed_row(self) -> None:
        """Test the line number of a bad cell is reported."""
        with tempfile.NamedTemporaryFile(mode="w", suffix=".csv", delete=False) as f:
            f.write("freq_hz,mag_db,phase_deg\n1,0,0\n2,abc,0\n")
            path = f.name

        try:
            with pytest.raises(ModelError, match=":3:"):
                read_bode_csv(path)
        finally:
            os.unlink(path)

    def test_read_missing_file(self) -> None:
        """Test error for a missing file."""
        with pytest.raises(ModelError, match="Bode file not found"):
            read_bode_csv("/nonexistent/bode.csv")


class TestTables:
    """Test table and trace CSV output."""

    def test_empty_cells(self) -> None:
        """Test missing values become empty cells and floats round-trip."""
        text = rows_to_csv(["a", "b", "c"], [{"a": 0.1, "b": None, "c": "x"}, {"a": np.float64(2.5)}])
        assert text == "a,b,c\n0.1,,x\n2.5,,\n"

    def test_cells_with_separators_are_quoted(self) -> None:
        """Test commas, quotes and newlines in a cell survive a csv reader round trip."""
        note = 'bandwidth design: "no bracket", retry\nnext line'
        text = rows_to_csv(["family", "error"], [{"family": "cglp-gfore", "error": note}])
        parsed = list(csv.DictReader(io.StringIO(text)))
        assert len(parsed) == 1
        assert parsed[0]["family"] == "cglp-gfore"
        assert parsed[0]["error"] == note

    def test_trace(self) -> None:
        """Test trace columns and reset flags."""
        t = np.array([0.0, 0.1, 0.2])
        trace = SimulationTrace(
            t=t, r=np.zeros(3), y=np.zeros(3), e=np.zeros(3), u=np.ones(3),
            noise=np.zeros(3), reset_indices=(1,), reset_times=(0.1,),
        )
        with tempfile.NamedTemporaryFile(suffix=".csv", delete=False) as f:
            path = f.name

        try:
            assert write_trace_csv(path, trace) == 3
            with open(path) as f:
                lines = f.read().splitlines()
            assert lines[0] == ",".join(TRACE_COLUMNS)
            assert [line.rsplit(",", 1)[1] for line in lines[1:]] == ["0", "1", "0"]
        finally:
            os.unlink(path)


class TestJson:
    """Test JSON documents."""

    def test_numpy_values(self) -> None:
        """Test arrays and numpy scalars serialize as plain JSON."""
        text = dumps_json({"b": np.array([1.0, 2.0]), "a": np.int64(3)})
        assert json.loads(text) == {"a": 3, "b": [1.0, 2.0]}
        assert text.index('"a"') < text.index('"b"')

    def test_unserializable(self) -> None:
        """Test error for an arbitrary object."""
        with pytest.raises(TypeError, match="not JSON serializable"):
            dumps_json({"x": object()})

    def test_write_and_load(self) -> None:
        """Test a document survives a write and load."""
        with tempfile.NamedTemporaryFile(suffix=".json", delete=False) as f:
            path = f.name

        try:
            write_json(path, {"gamma": 0.5})
            assert load_json(path) == {"gamma": 0.5}
        finally:
            os.unlink(path)

    def test_invalid_json(self) -> None:
        """Test the position of a syntax error is reported."""
        with tempfile.NamedTemporaryFile(mode="w", suffix=".json", delete=False) as f:
            f.write('{\n  "gamma": ,\n}\n')
            path = f.name

        try:
            with pytest.raises(ModelError, match=":2:"):
                load_json(path)
        finally:
            os.unlink(path)

    def test_non_object_root(self) -> None:
        """Test error for a JSON list."""
        with tempfile.NamedTemporaryFile(mode="w", suffix=".json", delete=False) as f:
            f.write("[1, 2]")
            path = f.name

        try:
            with pytest.raises(ModelError, match="expected a JSON object"):
                load_json(path)
        finally:
            os.unlink(path)
