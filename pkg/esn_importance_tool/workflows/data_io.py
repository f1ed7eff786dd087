#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Reading and writing the tool's files.

## Gridded CSV

    lat,lon,time,value
    -88.5,-180,1980-01,0.25
    ...

lat in [-90, 90], lon in [-180, 180), time either `YYYY-MM` or a nonnegative
integer, value a finite decimal. Rows must cover every (lat, lon, time) of the
lattice exactly once. Leading lines starting with `#` are metadata.

## Result CSV

Result tables start with metadata lines `# key: <json>` holding the settings
that produced them, followed by a regular CSV table. Floats are written with
17 significant digits so they read back exactly.
"""

import io
import json
import logging as log
import re
from pathlib import Path
from typing import Any, Dict, Final, List, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd
from anyio import open_file

from esn_importance_tool.core import reservoir
from esn_importance_tool.core.fields import MonthLabel, SpatioTemporalField
from esn_importance_tool.core.importance import ImportanceSeries
from esn_importance_tool.core.reservoir import EsnModel
from esn_importance_tool.errors import IngestError, ValidationError

Logger: Final[log.Logger] = log.getLogger(__name__)

GriddedColumns: Final[List[str]] = ["lat", "lon", "time", "value"]
ImportanceColumns: Final[List[str]] = [
    "variable",
    "method",
    "block_size",
    "forecast_time",
    "importance",
    "baseline_metric",
]
FloatFormat: Final[str] = "%.17g"
MetadataLine: Final[re.Pattern] = re.compile(r"^# ([A-Za-z0-9_]+): (.*)$")
IntegerTime: Final[re.Pattern] = re.compile(r"^\d+$")


def format_metadata(metadata: Mapping[str, Any]) -> str:
    """Render metadata as `# key: <json>` lines, keys in sorted order."""
    return "".join(
        f"# {key}: {json.dumps(metadata[key], sort_keys=True)}\n"
        for key in sorted(metadata)
    )


def split_metadata(text: str) -> Tuple[Dict[str, Any], int]:
    """Parse the leading metadata lines of a CSV text.

    :return: the metadata and the number of lines it spans
    :rtype: Tuple[Dict[str, Any], int]
    """
    metadata: Dict[str, Any] = {}
    lines = text.splitlines()
    count = 0
    for line in lines:
        if not line.startswith("#"):
            break
        count += 1
        match = MetadataLine.match(line)
        if match is None:
            continue
        try:
            metadata[match.group(1)] = json.loads(match.group(2))
        except json.JSONDecodeError:
            metadata[match.group(1)] = match.group(2)
    return metadata, count


def _float_column(frame: pd.DataFrame, column: str, offset: int) -> np.ndarray:
    try:
        values = frame[column].astype(float).to_numpy()
    except ValueError:
        bad = pd.to_numeric(frame[column], errors="coerce").isna().to_numpy()
        row = int(np.flatnonzero(bad)[0])
        raise IngestError(
            f"{column} {frame[column].iloc[row]!r} is not a number", row=row + offset
        )
    non_finite = np.flatnonzero(~np.isfinite(values))
    if non_finite.size:
        row = int(non_finite[0])
        raise IngestError(f"{column} is not finite", row=row + offset)
    return values


def _time_labels(frame: pd.DataFrame, offset: int) -> List:
    labels = frame["time"].str.strip().tolist()
    monthly = MonthLabel.match(labels[0]) is not None
    pattern = MonthLabel if monthly else IntegerTime
    for row, label in enumerate(labels):
        if pattern.match(label) is None:
            expected = "YYYY-MM" if monthly else "a nonnegative integer"
            raise IngestError(f"time {label!r} is not {expected}", row=row + offset)
    return labels if monthly else [int(label) for label in labels]


def parse_gridded_csv(text: str, source: str = "<text>") -> SpatioTemporalField:
    """Parse gridded CSV text into a field.

    Locations are ordered by latitude then longitude and times ascending.

    :param text: file contents
    :type text: str
    :param source: name used in log messages and as the variable name
    :type source: str
    :return: the complete-lattice field
    :rtype: SpatioTemporalField
    :raises IngestError: naming the file row or the missing cell
    """
    _, skipped = split_metadata(text)
    # data rows are numbered as file lines: metadata, header, then 1-based rows
    offset = skipped + 2
    try:
        frame = pd.read_csv(
            io.StringIO(text), skiprows=skipped, dtype=str, keep_default_na=False
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as error:
        raise IngestError(f"{source} is not a valid CSV: {error}", row=skipped + 1)
    if list(frame.columns) != GriddedColumns:
        raise IngestError(
            f"header must be {','.join(GriddedColumns)}, got {','.join(frame.columns)}",
            row=skipped + 1,
        )
    if frame.empty:
        raise IngestError(f"{source} has no data rows", row=skipped + 2)

    lat = _float_column(frame, "lat", offset)
    lon = _float_column(frame, "lon", offset)
    value = _float_column(frame, "value", offset)
    out_of_range = np.flatnonzero((np.abs(lat) > 90) | (lon < -180) | (lon >= 180))
    if out_of_range.size:
        row = int(out_of_range[0])
        raise IngestError(
            f"coordinates ({lat[row]}, {lon[row]}) outside lat [-90, 90], lon [-180, 180)",
            row=row + offset,
        )
    times = _time_labels(frame, offset)

    table = pd.DataFrame({"lat": lat, "lon": lon, "time": times, "value": value})
    duplicated = np.flatnonzero(table.duplicated(["lat", "lon", "time"]).to_numpy())
    if duplicated.size:
        row = int(duplicated[0])
        raise IngestError("duplicate (lat, lon, time) cell", row=row + offset)

    lats = np.sort(table["lat"].unique())
    lons = np.sort(table["lon"].unique())
    time_axis = sorted(set(times))
    lattice = pd.MultiIndex.from_product([lats, lons], names=["lat", "lon"])
    grid = table.pivot(index=["lat", "lon"], columns="time", values="value")
    grid = grid.reindex(index=lattice, columns=time_axis)
    missing = np.argwhere(grid.isna().to_numpy())
    if missing.size:
        location, column = missing[0]
        cell = (float(lattice[location][0]), float(lattice[location][1]), time_axis[column])
        raise IngestError(f"{source} is missing cell {cell}", cell=cell)

    locations = np.column_stack(
        [lattice.get_level_values("lon"), lattice.get_level_values("lat")]
    )
    Logger.debug(
        f"Ingested {source}: {len(lats)}x{len(lons)} lattice, {len(time_axis)} times"
    )
    return SpatioTemporalField(
        locations, tuple(time_axis), grid.to_numpy(), Path(source).stem
    )


def ingest_gridded_csv(path: Path, name: str | None = None) -> SpatioTemporalField:
    """Read a gridded CSV file into a field named `name` (the file stem by default).

    :raises IngestError: on a schema violation, an incomplete lattice or a
        non-finite value
    :raises OSError: if the file can't be read
    """
    field = parse_gridded_csv(Path(path).read_text(), str(path))
    if name is not None:
        field = SpatioTemporalField(field.locations, field.times, field.values, name)
    return field


def gridded_frame(field: SpatioTemporalField) -> pd.DataFrame:
    """Rows of a field in gridded CSV order: by time, then location."""
    n_locations, n_times = field.values.shape
    return pd.DataFrame(
        {
            "lat": np.tile(field.locations[:, 1], n_times),
            "lon": np.tile(field.locations[:, 0], n_times),
            "time": np.repeat(np.array(field.times, dtype=object), n_locations),
            "value": field.values.T.reshape(-1),
        }
    )


def render_table(frame: pd.DataFrame, metadata: Mapping[str, Any] | None = None) -> str:
    """Metadata lines followed by the CSV table, floats at 17 digits."""
    header = format_metadata(metadata) if metadata else ""
    return header + frame.to_csv(index=False, float_format=FloatFormat, lineterminator="\n")


async def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    async with await open_file(path, "w", newline="") as f:
        await f.write(text)
    Logger.info(f"Wrote {path}")


async def export_gridded_csv(
    field: SpatioTemporalField, path: Path, metadata: Mapping[str, Any] | None = None
) -> None:
    """Write a field as a gridded CSV."""
    await write_text(path, render_table(gridded_frame(field), metadata))


async def write_table(
    path: Path, frame: pd.DataFrame, metadata: Mapping[str, Any] | None = None
) -> None:
    await write_text(path, render_table(frame, metadata))


def read_table(path: Path) -> Tuple[pd.DataFrame, Dict[str, Any]]:
    """Read a result CSV and its metadata.

    :raises ValidationError: if the file has no table
    """
    text = Path(path).read_text()
    metadata, skipped = split_metadata(text)
    try:
        frame = pd.read_csv(io.StringIO(text), skiprows=skipped, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as error:
        raise ValidationError(f"{path} has no readable table: {error}")
    return frame, metadata


def importance_frame(series: Sequence[ImportanceSeries]) -> pd.DataFrame:
    """One row per (series, forecast time) with the importance CSV columns."""
    frames = [
        pd.DataFrame(
            {
                "variable": s.query.label,
                "method": s.query.method.value,
                "block_size": s.query.block_size,
                "forecast_time": list(s.forecast_times),
                "importance": s.values,
                "baseline_metric": s.baseline,
            }
        )
        for s in series
    ]
    if not frames:
        return pd.DataFrame(columns=ImportanceColumns)
    return pd.concat(frames, ignore_index=True)[ImportanceColumns]


async def save_model(model: EsnModel, path: Path) -> None:
    """Write a fitted model as a JSON document."""
    document = reservoir.model_to_document(model)
    await write_text(path, json.dumps(document) + "\n")


async def load_model(path: Path) -> EsnModel:
    """Read a model written by `save_model`."""
    async with await open_file(path) as f:
        contents: str = await f.read()
    try:
        document = json.loads(contents)
    except json.JSONDecodeError as error:
        raise ValidationError(f"{path} is not a model document: {error}")
    return reservoir.model_from_document(document)
