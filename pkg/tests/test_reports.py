import json

import numpy as np
import pandas as pd
import pytest

from components.errors import PreconditionError
from components.experiments import Histogram
from components.figures import FigureManager
from components.reports import ERROR_NAME, MANIFEST_NAME, ReportWriter, dumps, error_payload, write_error_report


def test_dumps_handles_numpy_and_complex_values():
    text = dumps({"b": np.int64(3), "a": np.float64(0.5), "c": np.array([1, 2]), "d": complex(1, -2),
                  "e": np.bool_(True)})
    assert json.loads(text) == {"a": 0.5, "b": 3, "c": [1, 2], "d": {"re": 1.0, "im": -2.0}, "e": True}
    assert text.index('"a"') < text.index('"b"')


def test_dumps_rejects_unknown_objects():
    with pytest.raises(TypeError):
        dumps({"x": object()})


def test_report_writer_and_manifest(tmp_path):
    writer = ReportWriter(tmp_path / "run")
    writer.write_csv("table.csv", pd.DataFrame({"x": [1, 2]}))
    writer.write_json("result.json", {"value": 1})
    manifest = json.loads(writer.write_manifest("demo bell", {"seed": 1}, "ok", {"passed": True}).read_text())
    assert manifest["files"] == ["result.json", "table.csv"]
    assert manifest["status"] == "ok"
    assert manifest["result"] == {"passed": True}
    assert manifest["settings"]["max_qubits"] == 24
    assert pd.read_csv(tmp_path / "run" / "table.csv")["x"].tolist() == [1, 2]
    assert (tmp_path / "run" / MANIFEST_NAME).exists()


def test_identical_reports_are_byte_identical(tmp_path):
    for name in ("a", "b"):
        ReportWriter(tmp_path / name).write_json("r.json", {"z": [0.1, 0.2], "a": 1})
    assert (tmp_path / "a" / "r.json").read_bytes() == (tmp_path / "b" / "r.json").read_bytes()


def test_error_report(tmp_path):
    try:
        raise PreconditionError("bad input")
    except PreconditionError as e:
        path = write_error_report(tmp_path, e)
    payload = json.loads(path.read_text())
    assert path.name == ERROR_NAME
    assert payload["error"] == "PreconditionError"
    assert payload["message"] == "bad input"
    assert payload["traceback"]
    assert error_payload(ValueError("x")) == {"error": "ValueError", "message": "x"}


def test_figures_are_written(tmp_path):
    figures = FigureManager(tmp_path)
    hist = Histogram.from_samples([0.0, 0.75, 0.75, 1.0], 4)
    svg = figures.histogram_svg(hist, "hist", "P(S)")
    assert "<svg" in svg.read_text()
    frame = pd.DataFrame({"pair_i": [0, 0], "pair_j": [1, 2], "p_triplet": [0.0, 0.75]})
    assert figures.profile_svg(frame, "profile", "profile").exists()
    assert figures.series_svg([1, 2, 3], [1.0, 0.1, 0.01], "series", "series", "M", "d", log_y=True).exists()
    html = figures.write_html(figures.histogram_figure(hist, "P(S)"), "hist")
    assert "plotly" in html.read_text().lower()


def test_figure_builders():
    figures = FigureManager(".")
    assert list(figures.histogram_figure(Histogram.from_samples([0.2, 0.4], 2), "title").data[0].y) == [2, 0]
    fig = figures.histogram_figure(Histogram.from_samples([0.2, 0.7], 2), "title")
    assert list(fig.data[0].y) == [1, 1]
    series = figures.series_figure([1, 2], [0.5, 0.25], "t", "M", "d", log_y=True)
    assert series.layout.yaxis.type == "log"
