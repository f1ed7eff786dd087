#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Spatio-temporal feature importance for fitted ESNs.

## Brief

The importance of input variable k over the block of times
{t, t-1, ..., t-b+1} on the forecast at time t+tau is the change in a
forecast error metric when that block of variable k's coefficients is
adjusted:

    stPFI: coefficients shuffled within each time, averaged over R replicates
    stZFI: coefficients set to zero

    I = mean_r M(y_{t+tau}, y^adjusted_{t+tau}) - M(y_{t+tau}, y^_{t+tau})

Values are signed, an adjustment can happen to improve a forecast.

## Metrics

    pc_rmse:               Q^-1/2 ||y - y^||, on the coefficient scale
    spatial_rmse:          N^-1/2 ||Z - (Phi y^ + mean)||
    weighted_spatial_rmse: sum_i w_i |Z_i - Z^_i| / sum_i w_i

For the spatial metrics the observed values are the spatial field (N rows)
and forecasts are back-transformed through the response's basis.
"""

import enum
import logging as log
from dataclasses import dataclass, field
from typing import Dict, Final, List, Sequence, Tuple

import numpy as np

from esn_importance_tool.core.basis import BasisDecomposition
from esn_importance_tool.core.reservoir import (
    EsnModel,
    forecast,
    forecast_batch,
    variable_slice,
)
from esn_importance_tool.errors import ValidationError

Logger: Final[log.Logger] = log.getLogger(__name__)

# adjusted histories run through the recursion per chunk
BatchChunk: Final[int] = 512


class MetricKind(str, enum.Enum):
    PC_RMSE = "pc_rmse"
    SPATIAL_RMSE = "spatial_rmse"
    WEIGHTED_SPATIAL_RMSE = "weighted_spatial_rmse"


class Method(str, enum.Enum):
    STPFI = "stPFI"
    STZFI = "stZFI"


@dataclass(frozen=True)
class MetricSpec:
    """A forecast error metric.

    Attributes:
        - kind: which metric
        - basis: response basis used to back-transform forecasts (spatial kinds)
        - weights: per-location weights (weighted kind)
    """

    kind: MetricKind = MetricKind.PC_RMSE
    basis: BasisDecomposition | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        kind = MetricKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is not MetricKind.PC_RMSE and self.basis is None:
            raise ValidationError(f"metric {kind.value} needs a basis")
        if kind is MetricKind.WEIGHTED_SPATIAL_RMSE:
            if self.weights is None:
                raise ValidationError("weighted_spatial_rmse needs weights")
            weights = np.asarray(self.weights, dtype=float)
            if weights.shape != (self.basis.n_locations,):
                raise ValidationError(
                    f"{weights.shape[0]} weights for {self.basis.n_locations} locations"
                )
            if np.any(weights < 0) or not np.any(weights > 0):
                raise ValidationError("weights must be nonnegative with a positive entry")
            object.__setattr__(self, "weights", weights)

    @property
    def observed_dim(self) -> int | None:
        """Rows the observed values must have, None when set by the model."""
        if self.kind is MetricKind.PC_RMSE:
            return None
        return self.basis.n_locations


@dataclass(frozen=True)
class ImportanceQuery:
    """What importance to compute.

    Attributes:
        - variable_index: k, position of the variable in the model's input blocks
        - block_size: b, number of consecutive input times adjusted
        - tau: forecast lead, must match the model's
        - method: stPFI or stZFI
        - replications: R, permutation replicates (stPFI only)
        - rng_seed: seed of the permutation streams
        - variable_name: label for reports
    """

    variable_index: int
    block_size: int = 1
    tau: int = 1
    method: Method = Method.STZFI
    replications: int = 10
    rng_seed: int = 0
    variable_name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.block_size < 1:
            raise ValidationError("block_size must be at least 1")
        if self.replications < 1:
            raise ValidationError("replications must be at least 1")
        if self.tau < 1:
            raise ValidationError("tau must be at least 1")

    @property
    def label(self) -> str:
        return self.variable_name or f"x{self.variable_index + 1}"


@dataclass(frozen=True)
class ImportanceSeries:
    """Importance values indexed by forecast time.

    Attributes:
        - forecast_times: 1-indexed forecast times t + tau
        - values: importance at each forecast time
        - query: the query the values answer
        - baseline: metric of the unadjusted forecast at each time
        - skipped_times: feasible forecast times whose block starts before time 1
    """

    forecast_times: Tuple[int, ...]
    values: np.ndarray
    query: ImportanceQuery
    baseline: np.ndarray
    skipped_times: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        baseline = np.asarray(self.baseline, dtype=float)
        times = tuple(int(t) for t in self.forecast_times)
        if values.shape != (len(times),) or baseline.shape != (len(times),):
            raise ValidationError("forecast times, values and baseline differ in length")
        if not np.all(np.isfinite(values)):
            raise ValidationError("importance values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "baseline", baseline)
        object.__setattr__(self, "forecast_times", times)
        object.__setattr__(self, "skipped_times", tuple(int(t) for t in self.skipped_times))


def latitude_weights(latitudes: Sequence[float]) -> np.ndarray:
    """Square root of the cosine of each latitude.

    :param latitudes: latitudes in degrees
    :type latitudes: Sequence[float]
    :return: nonnegative weights, 1 at the equator and 0 at the poles
    :rtype: np.ndarray
    :raises ValidationError: if a latitude is outside [-90, 90]
    """
    latitudes = np.atleast_1d(np.asarray(latitudes, dtype=float))
    if np.any(np.abs(latitudes) > 90):
        raise ValidationError("latitudes must be within [-90, 90] degrees")
    cosine = np.cos(latitudes * np.pi / 180)
    # cos(90 deg) rounds to 6e-17, not 0
    cosine[np.abs(latitudes) == 90] = 0.0
    return np.sqrt(np.clip(cosine, 0.0, None))


def weighted_error(
    observed: np.ndarray, predicted: np.ndarray, weights: np.ndarray
) -> float:
    """Weighted mean of the root squared errors, i.e. of |observed - predicted|.

    :raises ValidationError: if lengths differ or all weights are zero
    """
    observed = np.asarray(observed, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if not observed.shape == predicted.shape == weights.shape:
        raise ValidationError(
            f"observed {observed.shape}, predicted {predicted.shape} and weights "
            f"{weights.shape} must have the same length"
        )
    total = weights.sum()
    if total <= 0:
        raise ValidationError("weights sum to zero")
    return float(np.sum(weights * np.sqrt((observed - predicted) ** 2)) / total)


def weighted_spatial_mean(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted average over locations of an N x T matrix, one value per time.

    :raises ValidationError: if all weights are zero
    """
    weights = np.asarray(weights, dtype=float)
    if weights.sum() <= 0:
        raise ValidationError("weights sum to zero")
    return weights @ np.asarray(values, dtype=float) / weights.sum()


def _column_sums(matrix: np.ndarray) -> np.ndarray:
    # row by row, so a column's sum doesn't depend on the other columns
    total = np.zeros(matrix.shape[1])
    for row in matrix:
        total += row
    return total


def _spatial_columns(decomposition: BasisDecomposition, predicted: np.ndarray) -> np.ndarray:
    if predicted.shape[0] != decomposition.retained:
        raise ValidationError(
            f"expected {decomposition.retained} coefficient rows, got {predicted.shape[0]}"
        )
    spatial = np.repeat(decomposition.column_mean[:, None], predicted.shape[1], axis=1)
    for q in range(decomposition.retained):
        spatial += np.outer(decomposition.basis[:, q], predicted[q])
    return spatial


def _metric_columns(
    spec: MetricSpec, observed: np.ndarray, predicted: np.ndarray
) -> np.ndarray:
    # observed (d, n) and predicted (Q, n) -> metric per column
    if spec.kind is MetricKind.PC_RMSE:
        if observed.shape != predicted.shape:
            raise ValidationError(
                f"observed {observed.shape} and predicted {predicted.shape} differ"
            )
        return np.sqrt(_column_sums((observed - predicted) ** 2) / observed.shape[0])
    if observed.shape[0] != spec.basis.n_locations:
        raise ValidationError(
            f"observed values have {observed.shape[0]} locations, "
            f"basis has {spec.basis.n_locations}"
        )
    spatial = _spatial_columns(spec.basis, predicted)
    if spec.kind is MetricKind.SPATIAL_RMSE:
        return np.sqrt(_column_sums((observed - spatial) ** 2) / observed.shape[0])
    errors = spec.weights[:, None] * np.abs(observed - spatial)
    return _column_sums(errors) / spec.weights.sum()


def evaluate_metric(
    spec: MetricSpec, observed: np.ndarray, predicted: np.ndarray
) -> float:
    """Forecast error at one time.

    :param spec: the metric
    :type spec: MetricSpec
    :param observed: length Q coefficients (pc_rmse) or length N field column
    :type observed: np.ndarray
    :param predicted: length Q forecast coefficients
    :type predicted: np.ndarray
    :return: nonnegative error
    :rtype: float
    """
    observed = np.asarray(observed, dtype=float).reshape(-1, 1)
    predicted = np.asarray(predicted, dtype=float).reshape(-1, 1)
    return float(_metric_columns(spec, observed, predicted)[0])


def evaluate_metric_columns(
    spec: MetricSpec, observed: np.ndarray, predicted: np.ndarray
) -> np.ndarray:
    """Forecast error of each column of a d x n observed and Q x n forecast matrix."""
    return _metric_columns(
        spec, np.asarray(observed, dtype=float), np.asarray(predicted, dtype=float)
    )


def _check_times(inputs: np.ndarray, times: Sequence[int]) -> None:
    for time in times:
        if not 1 <= time <= inputs.shape[1]:
            raise ValidationError(f"time {time} outside 1..{inputs.shape[1]}")


def permute_block(
    inputs: np.ndarray,
    k: int,
    times: Sequence[int],
    rng: np.random.Generator,
    blocks: Sequence[int] | None = None,
) -> np.ndarray:
    """Copy of `inputs` with variable k's coefficients shuffled at each time.

    Each listed time gets its own shuffle of the P_k coefficients of variable
    k at that time; nothing else changes.

    :param inputs: P x T input matrix
    :param k: variable index
    :param times: 1-indexed times of the block
    :param rng: source of the shuffles
    :param blocks: P_k of each variable, a single block by default
    :return: the adjusted copy
    """
    inputs = np.asarray(inputs, dtype=float)
    rows = _variable_rows(inputs, k, blocks)
    _check_times(inputs, times)
    adjusted = inputs.copy()
    for time in times:
        adjusted[rows, time - 1] = rng.permutation(adjusted[rows, time - 1])
    return adjusted


def zero_block(
    inputs: np.ndarray,
    k: int,
    times: Sequence[int],
    blocks: Sequence[int] | None = None,
) -> np.ndarray:
    """Copy of `inputs` with variable k's coefficients zeroed at the listed times."""
    inputs = np.asarray(inputs, dtype=float)
    rows = _variable_rows(inputs, k, blocks)
    _check_times(inputs, times)
    adjusted = inputs.copy()
    for time in times:
        adjusted[rows, time - 1] = 0.0
    return adjusted


def _variable_rows(inputs: np.ndarray, k: int, blocks: Sequence[int] | None) -> slice:
    blocks = blocks or (inputs.shape[0],)
    if sum(blocks) != inputs.shape[0]:
        raise ValidationError(f"blocks {tuple(blocks)} don't partition {inputs.shape[0]} rows")
    return variable_slice(blocks, k)


def replicate_rng(seed: int, replicate: int, forecast_time: int) -> np.random.Generator:
    """Permutation stream of one (replicate, forecast time) pair."""
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(replicate, forecast_time))
    )


def block_times(forecast_time: int, tau: int, block_size: int) -> List[int]:
    """Input times {t, t-1, ..., t-b+1} adjusted for the forecast at t + tau."""
    t = forecast_time - tau
    return list(range(t, t - block_size, -1))


def _check_query(model: EsnModel, query: ImportanceQuery) -> None:
    if query.tau != model.hyperparams.tau:
        raise ValidationError(
            f"query lead {query.tau} differs from the model's {model.hyperparams.tau}"
        )
    if not 0 <= query.variable_index < len(model.input_blocks):
        raise ValidationError(
            f"variable index {query.variable_index} out of range for "
            f"{len(model.input_blocks)} variables"
        )


def _observed_matrix(model: EsnModel, metric: MetricSpec, outputs: np.ndarray) -> np.ndarray:
    outputs = np.asarray(outputs, dtype=float)
    expected = metric.observed_dim or model.output_dim
    if outputs.ndim != 2 or outputs.shape[0] != expected:
        raise ValidationError(
            f"observed values for {metric.kind.value} need {expected} rows, "
            f"got {outputs.shape}"
        )
    return outputs


def compute_importance(
    model: EsnModel,
    inputs: np.ndarray,
    outputs: np.ndarray,
    query: ImportanceQuery,
    metric: MetricSpec,
) -> ImportanceSeries:
    """Importance of one variable over blocks of times, at every forecast time.

    Forecast times whose block would start before time 1 are skipped and
    listed in the result's `skipped_times`.

    :param model: fitted model
    :type model: EsnModel
    :param inputs: P x T input coefficients
    :type inputs: np.ndarray
    :param outputs: observed values on the metric's scale: Q x T coefficients
        for pc_rmse, N x T spatial values otherwise
    :type outputs: np.ndarray
    :param query: variable, block size and method
    :type query: ImportanceQuery
    :param metric: forecast error metric
    :type metric: MetricSpec
    :return: importance at every computable forecast time
    :rtype: ImportanceSeries
    """
    _check_query(model, query)
    inputs = np.asarray(inputs, dtype=float)
    observed = _observed_matrix(model, metric, outputs)
    n_times = inputs.shape[1]
    if observed.shape[1] != n_times:
        raise ValidationError("inputs and observed values cover different times")
    first = model.first_forecast_time
    feasible = range(first, n_times + 1)
    kept = [s for s in feasible if s - query.tau - query.block_size + 1 >= 1]
    skipped = [s for s in feasible if s not in kept]
    if not kept:
        raise ValidationError(
            f"block size {query.block_size} leaves no computable forecast time"
        )

    baseline_forecasts = forecast(model, inputs)
    columns = np.array(kept) - first
    baseline = _metric_columns(
        metric, observed[:, np.array(kept) - 1], baseline_forecasts[:, columns]
    )

    replications = query.replications if query.method is Method.STPFI else 1
    jobs = [(s, r) for s in kept for r in range(replications)]
    adjusted_metric = np.empty(len(jobs))
    for start in range(0, len(jobs), BatchChunk):
        chunk = jobs[start : start + BatchChunk]
        batch = np.stack([_adjusted_inputs(model, inputs, query, s, r) for s, r in chunk])
        forecasts = forecast_batch(model, batch)
        chunk_times = np.array([s for s, _ in chunk])
        predicted = forecasts[np.arange(len(chunk)), :, chunk_times - first].T
        adjusted_metric[start : start + len(chunk)] = _metric_columns(
            metric, observed[:, chunk_times - 1], predicted
        )
    adjusted_mean = adjusted_metric.reshape(len(kept), replications).mean(axis=1)
    values = adjusted_mean - baseline
    Logger.debug(
        f"{query.method.value} of {query.label} (b={query.block_size}): "
        f"{len(kept)} times, {len(skipped)} skipped, peak {values.max():.4g}"
    )
    return ImportanceSeries(tuple(kept), values, query, baseline, tuple(skipped))


def _adjusted_inputs(
    model: EsnModel, inputs: np.ndarray, query: ImportanceQuery, forecast_time: int, replicate: int
) -> np.ndarray:
    times = block_times(forecast_time, query.tau, query.block_size)
    if query.method is Method.STZFI:
        return zero_block(inputs, query.variable_index, times, model.input_blocks)
    rng = replicate_rng(query.rng_seed, replicate, forecast_time)
    return permute_block(inputs, query.variable_index, times, rng, model.input_blocks)


def reduced_zeroed_importance(
    model: EsnModel, inputs: np.ndarray, outputs: np.ndarray, query: ImportanceQuery
) -> ImportanceSeries:
    """stZFI with the coefficient RMSE, written as a single difference.

    I = Q^-1/2 (||y - y^zeroed|| - ||y - y^||), computed forecast time by
    forecast time without batching. Agrees with `compute_importance` for a
    zeroing query and the pc_rmse metric.
    """
    _check_query(model, query)
    outputs = _observed_matrix(model, MetricSpec(), outputs)
    inputs = np.asarray(inputs, dtype=float)
    first = model.first_forecast_time
    baseline_forecasts = forecast(model, inputs)
    scale = model.output_dim**-0.5
    times, values, baseline = [], [], []
    for s in range(first, inputs.shape[1] + 1):
        block = block_times(s, query.tau, query.block_size)
        if block[-1] < 1:
            continue
        zeroed = zero_block(inputs, query.variable_index, block, model.input_blocks)
        adjusted = forecast(model, zeroed)[:, s - first]
        y = outputs[:, s - 1]
        base = np.linalg.norm(y - baseline_forecasts[:, s - first])
        times.append(s)
        values.append(scale * (np.linalg.norm(y - adjusted) - base))
        baseline.append(scale * base)
    query = ImportanceQuery(
        query.variable_index,
        query.block_size,
        query.tau,
        Method.STZFI,
        query.replications,
        query.rng_seed,
        query.variable_name,
    )
    return ImportanceSeries(tuple(times), np.array(values), query, np.array(baseline))


def _axis_key(series: ImportanceSeries) -> Tuple:
    q = series.query
    return (q.variable_index, q.block_size, q.tau, q.method, series.forecast_times)


def average_importance(series: Sequence[ImportanceSeries]) -> ImportanceSeries:
    """Pointwise mean of series that share their query and time axis.

    :raises ValidationError: if the list is empty or the axes differ
    """
    series = list(series)
    if not series:
        raise ValidationError("no importance series to average")
    key = _axis_key(series[0])
    for other in series[1:]:
        if _axis_key(other) != key:
            raise ValidationError("importance series have different queries or times")
    first = series[0]
    return ImportanceSeries(
        first.forecast_times,
        np.mean(np.stack([s.values for s in series]), axis=0),
        first.query,
        np.mean(np.stack([s.baseline for s in series]), axis=0),
        first.skipped_times,
    )


def importance_summary(series: ImportanceSeries) -> Dict[str, float]:
    """Peak time, peak value and mean of a series."""
    peak = int(np.argmax(series.values))
    return {
        "peak_time": series.forecast_times[peak],
        "peak": float(series.values[peak]),
        "mean": float(np.mean(series.values)),
    }
