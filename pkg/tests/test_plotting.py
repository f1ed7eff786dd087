import anyio
import numpy as np
import pandas as pd
import pytest

from esn_importance_tool.core.importance import ImportanceQuery, ImportanceSeries, Method
from esn_importance_tool.errors import ValidationError
from esn_importance_tool.workflows import plotting
from esn_importance_tool.workflows.plotting import PlotLine


def _series(values, k=0, block_size=1):
    query = ImportanceQuery(k, block_size=block_size, method=Method.STPFI, variable_name=f"v{k}")
    times = tuple(range(3, 3 + len(values)))
    return ImportanceSeries(times, np.asarray(values, dtype=float), query, np.ones(len(values)))


def test_constant_series_draws_one_line():
    lines = plotting.importance_lines([_series([1.0] * 5)])
    assert len(lines) == 1
    np.testing.assert_array_equal(lines[0].x, [3.0, 4.0, 5.0, 6.0, 7.0])
    svg = plotting.render_plot(lines)
    assert svg.startswith("<?xml")
    assert "<svg" in svg


def test_identical_series_keep_separate_legend_entries():
    lines = plotting.importance_lines([_series([0.5, 1.0], k=0), _series([0.5, 1.0], k=1)])
    assert [line.label for line in lines] == ["v0 stPFI b=1", "v1 stPFI b=1"]
    plotting.render_plot(lines)


def test_rendering_is_byte_identical():
    lines = plotting.importance_lines([_series([0.1, 0.4, 0.2]), _series([0.3, 0.0, 0.1], k=1)])
    first = plotting.render_plot(lines, event_times=[4], title="importance")
    second = plotting.render_plot(lines, event_times=[4], title="importance")
    assert first == second


def test_nothing_to_plot():
    with pytest.raises(ValidationError):
        plotting.render_plot([])
    with pytest.raises(ValidationError):
        plotting.render_plot([PlotLine("empty", np.array([]), np.array([]))])


def test_event_labels_map_to_time_indices():
    labels = ["1991-04", "1991-05", "1991-06"]
    assert plotting._event_position("1991-06", labels) == 3.0
    assert plotting._event_position(7, None) == 7.0
    with pytest.raises(ValidationError):
        plotting._event_position("1991-07", labels)


def test_frame_lines_layouts():
    importance = pd.DataFrame(
        {
            "variable": ["aod", "aod", "aod", "aod"],
            "method": ["stZFI"] * 4,
            "block_size": [1, 1, 3, 3],
            "forecast_time": [4, 5, 4, 5],
            "importance": [0.1, 0.2, 0.3, 0.4],
            "baseline_metric": [1.0] * 4,
        }
    )
    lines, ylabel = plotting.frame_lines(importance)
    assert ylabel == "importance"
    assert [line.label for line in lines] == ["aod stZFI b=1", "aod stZFI b=3"]
    np.testing.assert_array_equal(lines[1].y, [0.3, 0.4])

    evaluation = pd.DataFrame(
        {
            "split": [1994, 1994],
            "forecast_time": [2, 3],
            "partition": ["train", "test"],
            "rmse": [0.5, 0.7],
        }
    )
    lines, ylabel = plotting.frame_lines(evaluation)
    assert ylabel == "RMSE"
    assert [line.label for line in lines] == ["1994 train", "1994 test"]
    with pytest.raises(ValidationError):
        plotting.frame_lines(pd.DataFrame({"a": [1]}))


def test_export_plot_writes_svg(tmp_path):
    path = tmp_path / "plots" / "importance.svg"
    anyio.run(plotting.export_plot, [_series([0.2, 0.1])], path)
    assert path.read_text().startswith("<?xml")


def test_prediction_table_draws_observed_and_predicted():
    predictions = pd.DataFrame(
        {
            "split": [1994, 1994, 1997, 1997],
            "forecast_time": [7, 8, 7, 8],
            "time": ["1980-07", "1980-08", "1980-07", "1980-08"],
            "partition": ["train"] * 4,
            "observed": [210.0, 211.0, 210.0, 211.0],
            "predicted": [210.5, 210.8, 210.2, 211.1],
        }
    )
    lines, ylabel = plotting.frame_lines(predictions)
    assert ylabel == "spatial mean"
    assert [line.label for line in lines] == [
        "1994 observed",
        "1994 predicted",
        "1997 observed",
        "1997 predicted",
    ]
    np.testing.assert_array_equal(lines[1].y, [210.5, 210.8])
    plotting.render_plot(lines, ylabel)

    per_location = predictions.assign(lat=0.0, lon=0.0)
    with pytest.raises(ValidationError):
        plotting.frame_lines(per_location)
