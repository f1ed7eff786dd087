#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Shared data preparation of the fit, importance and evaluate workflows.

    gridded CSVs -> anomalies (climatologies or standardized values)
                 -> principal component coefficients per variable
                 -> stacked ESN inputs, response coefficients as outputs

The response variable is also an input, so its own lagged history gets an
importance curve like every other variable.
"""

import asyncio
import logging as log
from dataclasses import dataclass
from typing import Final, List, Sequence, Tuple, TypeAlias

import numpy as np

from esn_importance_tool.config import ExperimentConfig, Preprocess
from esn_importance_tool.core import basis, fields, importance
from esn_importance_tool.core.basis import BasisDecomposition
from esn_importance_tool.core.fields import (
    ClimatologyStats,
    SpatioTemporalField,
    StandardizationStats,
    TimeLabel,
)
from esn_importance_tool.core.importance import MetricKind, MetricSpec
from esn_importance_tool.errors import ValidationError
from esn_importance_tool.workflows import data_io
from esn_importance_tool.workflows.base_workflow import BaseWorkflow

Logger: Final[log.Logger] = log.getLogger(__name__)

Statistics: TypeAlias = ClimatologyStats | StandardizationStats


@dataclass(frozen=True)
class PreparedData:
    """Model-ready matrices of a set of variables.

    Attributes:
        - names: variable names, in input block order
        - anomalies: preprocessed fields over all times
        - stats: statistics that map each anomaly field back to its units
        - bases: principal component basis of each variable
        - inputs: P x T stacked coefficients of all variables
        - response_index: position of the response in `names`
    """

    names: Tuple[str, ...]
    anomalies: Tuple[SpatioTemporalField, ...]
    stats: Tuple[Statistics, ...]
    bases: Tuple[BasisDecomposition, ...]
    inputs: np.ndarray
    response_index: int

    @property
    def input_blocks(self) -> Tuple[int, ...]:
        return tuple(b.retained for b in self.bases)

    @property
    def response(self) -> SpatioTemporalField:
        return self.anomalies[self.response_index]

    @property
    def outputs(self) -> np.ndarray:
        """Q x T coefficients of the response."""
        start = sum(self.input_blocks[: self.response_index])
        return self.inputs[start : start + self.input_blocks[self.response_index]]

    @property
    def time_labels(self) -> Tuple[TimeLabel, ...]:
        return self.response.times

    def metric(self, kind: MetricKind) -> MetricSpec:
        """The metric of `kind` on the response, latitude weighted if asked."""
        response_basis = self.bases[self.response_index]
        if kind is MetricKind.PC_RMSE:
            return MetricSpec(kind)
        if kind is MetricKind.SPATIAL_RMSE:
            return MetricSpec(kind, basis=response_basis)
        weights = importance.latitude_weights(self.response.latitudes)
        return MetricSpec(kind, basis=response_basis, weights=weights)

    def observed(self, kind: MetricKind) -> np.ndarray:
        """Observed response on the scale of the metric."""
        if kind is MetricKind.PC_RMSE:
            return self.outputs
        return self.response.values

    def to_original_scale(self, field: SpatioTemporalField) -> SpatioTemporalField:
        """Map response anomalies back to the units of the raw response."""
        return restore(field, self.stats[self.response_index])


def preprocess(
    field: SpatioTemporalField,
    mode: Preprocess,
    train_columns: Sequence[int] | None = None,
) -> Tuple[SpatioTemporalField, Statistics]:
    """Anomalies of a field, with statistics from the training columns only.

    :param field: raw field
    :type field: SpatioTemporalField
    :param mode: climatology, standardize, or auto (climatology for monthly labels)
    :type mode: Preprocess
    :param train_columns: 0-indexed columns the statistics come from, all by default
    :type train_columns: Sequence[int] | None
    :return: preprocessed field over all times and the statistics removed
    :rtype: Tuple[SpatioTemporalField, Statistics]
    """
    if mode is Preprocess.AUTO:
        mode = Preprocess.CLIMATOLOGY if field.is_monthly else Preprocess.STANDARDIZE
    training = field if train_columns is None else field.select_times(train_columns)
    if mode is Preprocess.CLIMATOLOGY:
        anomalies, stats = fields.compute_climatology(training)
        if train_columns is None:
            return anomalies, stats
        return fields.apply_climatology(field, stats), stats
    anomalies, stats = fields.standardize(training)
    if train_columns is None:
        return anomalies, stats
    return fields.apply_standardization(field, stats), stats


def restore(field: SpatioTemporalField, stats: Statistics) -> SpatioTemporalField:
    """Undo `preprocess` with the statistics it returned."""
    if isinstance(stats, ClimatologyStats):
        return fields.invert_climatology(field, stats)
    return fields.destandardize(field, stats)


def prepare(
    raw: Sequence[SpatioTemporalField],
    config: ExperimentConfig,
    train_columns: Sequence[int] | None = None,
) -> PreparedData:
    """Preprocess and reduce every variable, fitting on the training columns.

    :raises ValidationError: if the variables don't share their times
    """
    names = tuple(f.variable_name for f in raw)
    times = raw[0].times
    for field in raw[1:]:
        if field.times != times:
            raise ValidationError(
                f"{field.variable_name} and {names[0]} cover different times"
            )
    anomalies, stats = zip(*(preprocess(f, config.preprocess, train_columns) for f in raw))
    bases = []
    for field in anomalies:
        training = field if train_columns is None else field.select_times(train_columns)
        bases.append(basis.fit_pca(training, config.retained_for(field.variable_name)))
    inputs = np.vstack([basis.project(b, f) for b, f in zip(bases, anomalies)])
    response_index = names.index(config.response_name())
    Logger.debug(
        f"Prepared {len(names)} variables, {inputs.shape[0]} inputs over "
        f"{inputs.shape[1]} times, response {names[response_index]}"
    )
    return PreparedData(names, anomalies, stats, tuple(bases), inputs, response_index)


async def load_variables(workflow: BaseWorkflow) -> List[SpatioTemporalField]:
    """Ingest the configured variables concurrently, in listed order."""
    tasks = [
        workflow.in_thread(data_io.ingest_gridded_csv, source.path, source.name)
        for source in workflow.config.variables
    ]
    return list(await asyncio.gather(*tasks))


def train_columns(times: Sequence[TimeLabel], split: int) -> List[int]:
    """Columns at or before a split: a year for monthly labels, a time otherwise.

    :raises ValidationError: if the split is outside the data span
    """
    if all(isinstance(t, str) for t in times):
        keys = [fields.parse_month_label(t)[0] for t in times]
    else:
        keys = [int(t) for t in times]
    if not keys[0] <= split <= keys[-1]:
        raise ValidationError(
            f"split {split} outside the data span {keys[0]}..{keys[-1]}"
        )
    return [column for column, key in enumerate(keys) if key <= split]
