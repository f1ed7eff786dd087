#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""SVG line charts of importance series, RMSE reports and predictions.

Charts are drawn on a standalone `Figure` with the Agg backend. The SVG id
salt is fixed and no date is written, so the same input always renders to
the same bytes.
"""

import io
import logging as log
from dataclasses import dataclass
from pathlib import Path
from typing import Final, List, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

from matplotlib.figure import Figure  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from esn_importance_tool.core.fields import TimeLabel  # noqa: E402
from esn_importance_tool.core.importance import ImportanceSeries  # noqa: E402
from esn_importance_tool.errors import ValidationError  # noqa: E402
from esn_importance_tool.workflows import data_io  # noqa: E402

Logger: Final[log.Logger] = log.getLogger(__name__)

SvgSalt: Final[str] = "esn-importance-tool"


@dataclass(frozen=True)
class PlotLine:
    label: str
    x: np.ndarray
    y: np.ndarray


def importance_lines(series: Sequence[ImportanceSeries]) -> List[PlotLine]:
    return [
        PlotLine(
            f"{s.query.label} {s.query.method.value} b={s.query.block_size}",
            np.array(s.forecast_times, dtype=float),
            s.values,
        )
        for s in series
    ]


def prediction_lines(frame: pd.DataFrame) -> List[PlotLine]:
    """Observed and predicted spatial means, two lines per split."""
    keys = ["split"]
    if "sweep_value" in frame.columns:
        keys = ["sweep_param", "sweep_value"] + keys
    lines = []
    for key, group in frame.groupby(keys, sort=False):
        prefix = " ".join(str(part) for part in key)
        x = group["forecast_time"].to_numpy(dtype=float)
        for column in ("observed", "predicted"):
            lines.append(PlotLine(f"{prefix} {column}", x, group[column].to_numpy(dtype=float)))
    return lines


def frame_lines(frame: pd.DataFrame) -> Tuple[List[PlotLine], str]:
    """Lines of an importance, evaluation or prediction table, and the y axis label.

    :raises ValidationError: if the table has none of these layouts
    """
    columns = set(frame.columns)
    if {"split", "forecast_time", "observed", "predicted"} <= columns and "lat" not in columns:
        return prediction_lines(frame), "spatial mean"
    if set(data_io.ImportanceColumns) <= columns:
        keys, value, ylabel = ["variable", "method", "block_size"], "importance", "importance"
    elif {"split", "forecast_time", "partition", "rmse"} <= columns:
        keys, value, ylabel = ["split", "partition"], "rmse", "RMSE"
        if "sweep_value" in frame.columns:
            keys = ["sweep_param", "sweep_value"] + keys
    else:
        raise ValidationError("table is not an importance, evaluation or prediction table")
    lines = []
    for key, group in frame.groupby(keys, sort=False):
        label = " ".join(str(part) for part in key)
        if "block_size" in keys:
            label = f"{key[0]} {key[1]} b={key[2]}"
        lines.append(
            PlotLine(
                label,
                group["forecast_time"].to_numpy(dtype=float),
                group[value].to_numpy(dtype=float),
            )
        )
    return lines, ylabel


def _event_position(event: TimeLabel, time_labels: Sequence[TimeLabel] | None) -> float:
    if time_labels and event in time_labels:
        return float(list(time_labels).index(event) + 1)
    if isinstance(event, (int, float)) and not isinstance(event, bool):
        return float(event)
    raise ValidationError(f"event time {event!r} is not a time of the data")


def render_plot(
    lines: Sequence[PlotLine],
    ylabel: str = "importance",
    event_times: Sequence[TimeLabel] = (),
    time_labels: Sequence[TimeLabel] | None = None,
    title: str = "",
) -> str:
    """Render lines as an SVG document.

    :param lines: lines to draw, one legend entry each
    :type lines: Sequence[PlotLine]
    :param ylabel: y axis label
    :param event_times: times marked with vertical dashed lines, either
        forecast time indices or labels found in `time_labels`
    :param time_labels: label of each 1-indexed time, used for event markers
    :param title: chart title
    :return: the SVG text
    :rtype: str
    :raises ValidationError: if there is nothing to draw
    """
    if not lines or any(len(line.x) == 0 for line in lines):
        raise ValidationError("nothing to plot")
    figure = Figure(figsize=(8, 4.5))
    axes = figure.add_subplot()
    for line in lines:
        axes.plot(line.x, line.y, label=line.label, linewidth=1.2)
    for event in event_times:
        axes.axvline(
            _event_position(event, time_labels), color="grey", linestyle="--", linewidth=1
        )
    axes.set_xlabel("forecast time")
    axes.set_ylabel(ylabel)
    if title:
        axes.set_title(title)
    axes.legend(loc="best", fontsize="small")
    buffer = io.StringIO()
    with matplotlib.rc_context({"svg.hashsalt": SvgSalt, "svg.fonttype": "path"}):
        figure.savefig(buffer, format="svg", metadata={"Date": None})
    return buffer.getvalue()


async def export_plot(
    data: Sequence[ImportanceSeries] | pd.DataFrame,
    path: Path,
    event_times: Sequence[TimeLabel] = (),
    time_labels: Sequence[TimeLabel] | None = None,
    title: str = "",
) -> None:
    """Write importance series or a result table as an SVG line chart.

    :raises ValidationError: on empty input
    :raises OSError: if the file can't be written
    """
    if isinstance(data, pd.DataFrame):
        lines, ylabel = frame_lines(data)
    else:
        lines, ylabel = importance_lines(data), "importance"
    svg = render_plot(lines, ylabel, event_times, time_labels, title)
    await data_io.write_text(path, svg)
