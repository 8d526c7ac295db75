"""
Figures for experiment outputs: static SVG through reportlab graphics and optional interactive
HTML through plotly.
"""
import logging
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
import plotly.graph_objects as go
from reportlab.graphics import renderSVG
from reportlab.graphics.shapes import Drawing, Line, Rect, String
from reportlab.lib import colors

from components.experiments import Histogram

logger = logging.getLogger(__name__)

WIDTH, HEIGHT = 480, 300
MARGIN = 40


class PlotArea(Drawing):
    """
    Framed drawing with axes, tick labels and a title; subclasses add the marks
    """
    def __init__(self, title: str, x_range, y_range, x_label: str = "", y_label: str = "",
                 width: int = WIDTH, height: int = HEIGHT):
        Drawing.__init__(self, width, height)
        self._x_range = x_range
        self._y_range = y_range
        self._left, self._bottom = MARGIN, MARGIN
        self._plot_w = width - 2 * MARGIN
        self._plot_h = height - 2 * MARGIN
        self.add(Rect(0, 0, width, height, fillColor=colors.white, strokeColor=None))
        self.add(Line(self._left, self._bottom, self._left + self._plot_w, self._bottom, strokeColor=colors.black))
        self.add(Line(self._left, self._bottom, self._left, self._bottom + self._plot_h, strokeColor=colors.black))
        self.add(String(width / 2, height - 18, title, fontSize=12, fillColor=colors.darkblue,
                        textAnchor="middle", fontName="Helvetica-Bold"))
        if x_label:
            self.add(String(width / 2, 8, x_label, fontSize=9, textAnchor="middle"))
        if y_label:
            self.add(String(4, height / 2, y_label, fontSize=9))
        for k in range(5):
            x_value = x_range[0] + (x_range[1] - x_range[0]) * k / 4
            y_value = y_range[0] + (y_range[1] - y_range[0]) * k / 4
            self.add(String(self.x(x_value), self._bottom - 12, f"{x_value:.3g}", fontSize=7, textAnchor="middle"))
            self.add(String(self._left - 4, self.y(y_value) - 2, f"{y_value:.3g}", fontSize=7, textAnchor="end"))

    def x(self, value: float) -> float:
        lo, hi = self._x_range
        return self._left + (value - lo) / (hi - lo) * self._plot_w if hi > lo else self._left

    def y(self, value: float) -> float:
        lo, hi = self._y_range
        return self._bottom + (value - lo) / (hi - lo) * self._plot_h if hi > lo else self._bottom


class HistogramChart(PlotArea):
    def __init__(self, hist: Histogram, title: str, x_label: str = "probability", color=colors.steelblue):
        top = max(int(hist.counts.max()), 1)
        PlotArea.__init__(self, title, (0.0, 1.0), (0.0, float(top)), x_label, "count")
        for lo, hi, count in zip(hist.edges[:-1], hist.edges[1:], hist.counts):
            if count:
                self.add(Rect(self.x(lo), self.y(0), self.x(hi) - self.x(lo), self.y(count) - self.y(0),
                              fillColor=color, strokeColor=colors.white, strokeWidth=0.3))


class ScatterChart(PlotArea):
    def __init__(self, xs: Sequence[float], ys: Sequence[float], title: str, x_label: str = "",
                 y_label: str = "", y_range=None, connect: bool = False, color=colors.darkorange):
        xs, ys = list(map(float, xs)), list(map(float, ys))
        x_range = (min(xs), max(xs)) if xs else (0.0, 1.0)
        if y_range is None:
            y_range = (min(ys), max(ys)) if ys else (0.0, 1.0)
        PlotArea.__init__(self, title, x_range, y_range, x_label, y_label)
        points = [(self.x(a), self.y(b)) for a, b in zip(xs, ys)]
        if connect:
            for (x0, y0), (x1, y1) in zip(points, points[1:]):
                self.add(Line(x0, y0, x1, y1, strokeColor=color, strokeWidth=1.5))
        for px, py in points:
            self.add(Rect(px - 1.5, py - 1.5, 3, 3, fillColor=color, strokeColor=None))


class FigureManager:
    def __init__(self, out_dir: Path):
        """
        Writes figures under out_dir
        """
        self.out_dir = Path(out_dir)
        self.colors = {
            "primary": "#4CAF50",
            "secondary": "#2196F3",
            "warning": "#FFA726",
            "info": "#00BCD4",
            "text": "#222222",
        }

    def _path(self, name: str, suffix: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / f"{name}.{suffix}"

    def write_svg(self, drawing: Drawing, name: str) -> Path:
        path = self._path(name, "svg")
        renderSVG.drawToFile(drawing, str(path))
        logger.debug("Wrote %s", path)
        return path

    def write_html(self, fig: go.Figure, name: str) -> Path:
        path = self._path(name, "html")
        fig.write_html(str(path), include_plotlyjs="cdn")
        logger.debug("Wrote %s", path)
        return path

    # SVG builders

    def histogram_svg(self, hist: Histogram, name: str, title: str, color=colors.steelblue) -> Path:
        return self.write_svg(HistogramChart(hist, title, color=color), name)

    def profile_svg(self, frame: pd.DataFrame, name: str, title: str) -> Path:
        chart = ScatterChart(range(len(frame)), frame["p_triplet"], title, "pair", "P(t)", y_range=(0.0, 1.0))
        return self.write_svg(chart, name)

    def series_svg(self, xs, ys, name: str, title: str, x_label: str, y_label: str, log_y: bool = False) -> Path:
        values = [math.log10(max(v, 1e-300)) if log_y else v for v in ys]
        label = f"log10 {y_label}" if log_y else y_label
        return self.write_svg(ScatterChart(xs, values, title, x_label, label, connect=True), name)

    # HTML builders

    def histogram_figure(self, hist: Histogram, title: str, color: Optional[str] = None) -> go.Figure:
        centers = (hist.edges[:-1] + hist.edges[1:]) / 2
        fig = go.Figure(data=[
            go.Bar(
                x=centers,
                y=hist.counts,
                width=np.diff(hist.edges),
                marker_color=color or self.colors["secondary"],
            )
        ])
        fig.update_layout(
            title={"text": title, "x": 0.5, "xanchor": "center"},
            font=dict(color=self.colors["text"]),
            margin=dict(l=40, r=40, t=60, b=40),
            bargap=0.05,
        )
        fig.update_xaxes(title_text="probability", range=[0, 1])
        fig.update_yaxes(title_text="count")
        return fig

    def profile_figure(self, frame: pd.DataFrame, title: str) -> go.Figure:
        labels = [f"({i},{j})" for i, j in zip(frame["pair_i"], frame["pair_j"])]
        fig = go.Figure()
        fig.add_trace(go.Scatter(
            x=list(range(len(frame))),
            y=frame["p_triplet"],
            mode="markers",
            text=labels,
            marker=dict(size=6, color=self.colors["warning"]),
        ))
        fig.update_layout(title=title, font={"color": self.colors["text"]}, margin=dict(l=20, r=20, t=50, b=20))
        fig.update_xaxes(title_text="pair")
        fig.update_yaxes(title_text="P(t)", range=[0, 1])
        return fig

    def series_figure(self, xs, ys, title: str, x_label: str, y_label: str, log_y: bool = False) -> go.Figure:
        fig = go.Figure()
        fig.add_trace(go.Scatter(
            x=list(xs),
            y=list(ys),
            mode="lines+markers",
            line=dict(color=self.colors["info"], width=3),
            marker=dict(size=8, color=self.colors["info"]),
        ))
        fig.update_layout(title=title, font={"color": self.colors["text"]}, margin=dict(l=20, r=20, t=50, b=20))
        fig.update_xaxes(title_text=x_label)
        fig.update_yaxes(title_text=y_label, type="log" if log_y else "linear")
        return fig
