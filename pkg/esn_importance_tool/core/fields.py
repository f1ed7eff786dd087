#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Gridded spatio-temporal variables and their preprocessing transforms.

A `SpatioTemporalField` holds one variable observed at N locations over T
times, as an N x T matrix whose column t is the spatial field at time t.

Two transforms are provided, each with its inverse:

    - standardize / destandardize: per-location mean and standard deviation
      across time, used on simulated data.
    - compute_climatology / invert_climatology: per-location, per-calendar-month
      mean and standard deviation, used on monthly climate data.

Standard deviations use the unbiased (n - 1) denominator.
"""

import logging as log
import re
from dataclasses import dataclass
from typing import Final, List, Sequence, Tuple

import numpy as np

from esn_importance_tool.errors import DegenerateStatisticsError, ValidationError

Logger: Final[log.Logger] = log.getLogger(__name__)
MonthLabel: Final[re.Pattern] = re.compile(r"^(\d{4})-(0[1-9]|1[0-2])$")
TimeLabel = int | str


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


def _is_degenerate(mean: np.ndarray, sd: np.ndarray) -> np.ndarray:
    # constant rows can leave rounding noise in the sd
    return sd <= 8 * np.finfo(float).eps * np.maximum(np.abs(mean), 1.0)


def parse_month_label(label: TimeLabel) -> Tuple[int, int]:
    """Split a `YYYY-MM` time label into (year, month).

    :param label: a time label
    :type label: int | str
    :return: year and calendar month (1-12)
    :rtype: Tuple[int, int]
    :raises ValidationError: if the label isn't a `YYYY-MM` string
    """
    match = MonthLabel.match(label) if isinstance(label, str) else None
    if match is None:
        raise ValidationError(f"time label {label!r} is not of the form YYYY-MM")
    return int(match.group(1)), int(match.group(2))


@dataclass(frozen=True)
class SpatioTemporalField:
    """Values of one variable at N locations and T times.

    Attributes:
        - locations: N x 2 array of (x, y) coordinates. For climate data x is
          the longitude and y the latitude, in degrees.
        - times: T strictly increasing labels, integers or `YYYY-MM` strings
        - values: N x T matrix, column t holds the field at times[t]
        - variable_name: name of the variable
    """

    locations: np.ndarray
    times: Tuple[TimeLabel, ...]
    values: np.ndarray
    variable_name: str = ""

    def __post_init__(self):
        locations = _frozen(self.locations)
        values = _frozen(self.values)
        times = tuple(self.times)
        if locations.ndim != 2 or locations.shape[1] != 2:
            raise ValidationError("locations must be an N x 2 array")
        if values.ndim != 2:
            raise ValidationError("values must be an N x T matrix")
        n_locations, n_times = values.shape
        if n_locations < 1 or n_times < 1:
            raise ValidationError("a field needs at least one location and time")
        if locations.shape[0] != n_locations:
            raise ValidationError(
                f"{locations.shape[0]} locations given for {n_locations} rows"
            )
        if len(times) != n_times:
            raise ValidationError(f"{len(times)} time labels given for {n_times} columns")
        if not np.all(np.isfinite(values)):
            row, column = np.argwhere(~np.isfinite(values))[0]
            raise ValidationError(
                f"non-finite value at location {row}, time {times[column]!r}"
            )
        if any(type(a) is not type(b) for a, b in zip(times, times[1:])):
            raise ValidationError("time labels must all be integers or all strings")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError("time labels must be strictly increasing")
        if len(np.unique(locations, axis=0)) != n_locations:
            raise ValidationError("locations must be pairwise distinct")
        object.__setattr__(self, "locations", locations)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "times", times)

    @property
    def n_locations(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]

    @property
    def latitudes(self) -> np.ndarray:
        return self.locations[:, 1]

    @property
    def is_monthly(self) -> bool:
        return all(
            isinstance(label, str) and MonthLabel.match(label)
            for label in self.times
        )

    def with_values(self, values: np.ndarray) -> "SpatioTemporalField":
        """Return a field on the same locations and times with new values."""
        return SpatioTemporalField(
            self.locations, self.times, values, self.variable_name
        )

    def select_times(self, columns: Sequence[int]) -> "SpatioTemporalField":
        """Return the sub-field made of the given (0-indexed) columns."""
        columns = list(columns)
        return SpatioTemporalField(
            self.locations,
            tuple(self.times[c] for c in columns),
            self.values[:, columns],
            self.variable_name,
        )


@dataclass(frozen=True)
class StandardizationStats:
    """Per-location mean and sd removed by `standardize`."""

    mean: np.ndarray
    sd: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(self.mean))
        object.__setattr__(self, "sd", _frozen(self.sd))


@dataclass(frozen=True)
class ClimatologyStats:
    """Per-location, per-month mean and sd removed by `compute_climatology`.

    Both matrices are N x 12, column m - 1 holds calendar month m. Statistics
    built by hand may leave months out as NaN.
    """

    mean: np.ndarray
    sd: np.ndarray
    months_present: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(self.mean))
        object.__setattr__(self, "sd", _frozen(self.sd))


def standardize(
    field: SpatioTemporalField,
) -> Tuple[SpatioTemporalField, StandardizationStats]:
    """Remove the mean across time and divide by the sd, location by location.

    :param field: field with at least two times
    :type field: SpatioTemporalField
    :return: the standardized field and the statistics that invert it
    :rtype: Tuple[SpatioTemporalField, StandardizationStats]
    :raises DegenerateStatisticsError: if a location is constant over time
    """
    if field.n_times < 2:
        raise ValidationError("standardizing requires at least two times")
    mean = field.values.mean(axis=1)
    sd = field.values.std(axis=1, ddof=1)
    degenerate = np.flatnonzero(_is_degenerate(mean, sd))
    if degenerate.size:
        location = int(degenerate[0])
        raise DegenerateStatisticsError(
            f"zero standard deviation at location {location}", location
        )
    standardized = (field.values - mean[:, None]) / sd[:, None]
    Logger.debug(f"Standardized {field.variable_name or 'field'}: {field.values.shape}")
    return field.with_values(standardized), StandardizationStats(mean, sd)


def destandardize(
    field: SpatioTemporalField, stats: StandardizationStats
) -> SpatioTemporalField:
    """Undo `standardize`: values * sd + mean, location by location."""
    if stats.mean.shape != (field.n_locations,) or stats.sd.shape != (field.n_locations,):
        raise ValidationError(
            f"statistics for {stats.mean.shape[0]} locations applied to "
            f"a field with {field.n_locations}"
        )
    return field.with_values(field.values * stats.sd[:, None] + stats.mean[:, None])


def _months(field: SpatioTemporalField) -> np.ndarray:
    return np.array([parse_month_label(label)[1] for label in field.times])


def compute_climatology(
    field: SpatioTemporalField,
) -> Tuple[SpatioTemporalField, ClimatologyStats]:
    """Convert a monthly field into climatologies.

    Each value becomes (value - mean) / sd, where mean and sd are taken over
    all years of the same calendar month at the same location.

    :param field: field with `YYYY-MM` time labels
    :type field: SpatioTemporalField
    :return: the climatology field and the statistics that invert it
    :rtype: Tuple[SpatioTemporalField, ClimatologyStats]
    :raises DegenerateStatisticsError: if a (location, month) group has fewer
        than two values or zero sd, or a calendar month never occurs
    """
    months = _months(field)
    mean = np.full((field.n_locations, 12), np.nan)
    sd = np.full((field.n_locations, 12), np.nan)
    anomalies = np.empty_like(field.values)
    present: List[int] = sorted(set(months.tolist()))
    for month in present:
        columns = months == month
        group = field.values[:, columns]
        if group.shape[1] < 2:
            raise DegenerateStatisticsError(
                f"month {month} has a single observation at location 0", 0, month
            )
        group_mean = group.mean(axis=1)
        group_sd = group.std(axis=1, ddof=1)
        degenerate = np.flatnonzero(_is_degenerate(group_mean, group_sd))
        if degenerate.size:
            location = int(degenerate[0])
            raise DegenerateStatisticsError(
                f"zero standard deviation at location {location}, month {month}",
                location,
                month,
            )
        mean[:, month - 1] = group_mean
        sd[:, month - 1] = group_sd
        anomalies[:, columns] = (group - group_mean[:, None]) / group_sd[:, None]
    absent = sorted(set(range(1, 13)) - set(present))
    if absent:
        raise DegenerateStatisticsError(
            f"month {absent[0]} has no observations at location 0", 0, absent[0]
        )
    Logger.debug(
        f"Climatology of {field.variable_name or 'field'} over months {present}"
    )
    return field.with_values(anomalies), ClimatologyStats(mean, sd, tuple(present))


def invert_climatology(
    field: SpatioTemporalField, stats: ClimatologyStats
) -> SpatioTemporalField:
    """Undo `compute_climatology`: value * sd + mean of the value's month."""
    if stats.mean.shape != (field.n_locations, 12):
        raise ValidationError(
            f"climatology statistics for {stats.mean.shape[0]} locations applied "
            f"to a field with {field.n_locations}"
        )
    columns = _months(field) - 1
    month_mean = stats.mean[:, columns]
    month_sd = stats.sd[:, columns]
    missing = np.argwhere(np.isnan(month_mean) | np.isnan(month_sd))
    if missing.size:
        location, column = missing[0]
        raise DegenerateStatisticsError(
            f"no statistics for location {location}, month {columns[column] + 1}",
            int(location),
            int(columns[column] + 1),
        )
    return field.with_values(field.values * month_sd + month_mean)


def apply_standardization(
    field: SpatioTemporalField, stats: StandardizationStats
) -> SpatioTemporalField:
    """Standardize a field with statistics computed on another set of times."""
    if stats.mean.shape != (field.n_locations,):
        raise ValidationError(
            f"statistics for {stats.mean.shape[0]} locations applied to "
            f"a field with {field.n_locations}"
        )
    return field.with_values((field.values - stats.mean[:, None]) / stats.sd[:, None])


def apply_climatology(
    field: SpatioTemporalField, stats: ClimatologyStats
) -> SpatioTemporalField:
    """Climatologies of a field using monthly statistics from another period.

    :raises DegenerateStatisticsError: if a month of the field has no statistics
    """
    if stats.mean.shape != (field.n_locations, 12):
        raise ValidationError(
            f"climatology statistics for {stats.mean.shape[0]} locations applied "
            f"to a field with {field.n_locations}"
        )
    columns = _months(field) - 1
    absent = sorted({int(c) + 1 for c in columns if np.isnan(stats.mean[0, c])})
    if absent:
        raise DegenerateStatisticsError(
            f"no statistics for month {absent[0]}", 0, absent[0]
        )
    return field.with_values(
        (field.values - stats.mean[:, columns]) / stats.sd[:, columns]
    )
