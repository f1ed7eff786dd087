#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Train/test RMSE with a blocked split in time.

For every split in `split_years` the preprocessing statistics, principal
components and ESN are fitted on the times up to and including the split,
then the model forecasts every feasible time of the full record. Each
forecast time gets one row tagged `train` or `test`.

Outputs:
    - `evaluation.csv`: spatial RMSE of the response anomalies per forecast
      time, with the configured metric next to it
    - `forecasts.csv`: observed and forecast response at every location and
      forecast time, as anomalies and in the units of the raw data
    - `predictions.csv`: latitude weighted spatial means of the observed and
      forecast response in raw units, plotted per split when `plot` is on

With a `sweep` the whole evaluation is repeated for each value of one ESN
hyperparameter, rows tagged with `sweep_param` and `sweep_value`.
"""

import asyncio
import logging as log
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Final, List, Sequence

import numpy as np
import pandas as pd

from esn_importance_tool.config import ExperimentConfig
from esn_importance_tool.core import basis, importance, reservoir
from esn_importance_tool.core.fields import SpatioTemporalField
from esn_importance_tool.core.importance import MetricKind, MetricSpec
from esn_importance_tool.core.reservoir import EsnHyperparams
from esn_importance_tool.errors import ConfigError
from esn_importance_tool.workflows import data_io, plotting, preparation
from esn_importance_tool.workflows.base_workflow import BaseWorkflow

Logger: Final[log.Logger] = log.getLogger(__name__)

EvaluationColumns: Final[List[str]] = [
    "split",
    "forecast_time",
    "partition",
    "rmse",
    "metric_error",
]
ForecastColumns: Final[List[str]] = [
    "split",
    "forecast_time",
    "time",
    "partition",
    "lat",
    "lon",
    "observed_anomaly",
    "predicted_anomaly",
    "observed",
    "predicted",
]
PredictionColumns: Final[List[str]] = [
    "split",
    "forecast_time",
    "time",
    "partition",
    "observed",
    "predicted",
]


@dataclass(frozen=True)
class SplitEvaluation:
    """Tables of one split.

    Attributes:
        - report: errors per forecast time, `EvaluationColumns`
        - forecasts: one row per location and forecast time, `ForecastColumns`
        - predictions: spatial means per forecast time, `PredictionColumns`
    """

    report: pd.DataFrame
    forecasts: pd.DataFrame
    predictions: pd.DataFrame


def _forecast_frame(
    split: int,
    forecast_times: List[int],
    partition: List[str],
    observed_anomaly: SpatioTemporalField,
    predicted_anomaly: SpatioTemporalField,
    observed: SpatioTemporalField,
    predicted: SpatioTemporalField,
) -> pd.DataFrame:
    frame = data_io.gridded_frame(observed_anomaly)
    n_locations = observed_anomaly.n_locations
    frame["split"] = split
    frame["forecast_time"] = np.repeat(forecast_times, n_locations)
    frame["partition"] = np.repeat(partition, n_locations)
    frame["observed_anomaly"] = frame.pop("value")
    frame["predicted_anomaly"] = predicted_anomaly.values.T.reshape(-1)
    frame["observed"] = observed.values.T.reshape(-1)
    frame["predicted"] = predicted.values.T.reshape(-1)
    return frame[ForecastColumns]


def evaluate_split(
    raw: Sequence[SpatioTemporalField],
    config: ExperimentConfig,
    hyperparams: EsnHyperparams,
    split: int,
) -> SplitEvaluation:
    """Errors and forecasts of a model trained up to `split`.

    `rmse` is the root mean squared error over locations of the response
    anomalies, `metric_error` the configured metric. Forecasts are mapped
    back to raw units with the statistics of the training period.

    :param raw: ingested variables sharing their times
    :type raw: Sequence[SpatioTemporalField]
    :param config: experiment settings
    :type config: ExperimentConfig
    :param hyperparams: ESN settings of this evaluation
    :type hyperparams: EsnHyperparams
    :param split: last training year, or last training time for integer labels
    :type split: int
    :return: the error report, forecasts and spatial mean predictions
    :rtype: SplitEvaluation
    """
    columns = preparation.train_columns(raw[0].times, split)
    data = preparation.prepare(raw, config, columns)
    n_train = len(columns)
    model = reservoir.fit(
        hyperparams,
        data.inputs[:, :n_train],
        data.outputs[:, :n_train],
        input_blocks=data.input_blocks,
    )
    predicted = reservoir.forecast(model, data.inputs)
    first = model.first_forecast_time
    times = list(range(first, data.inputs.shape[1] + 1))
    partition = ["train" if t <= n_train else "test" for t in times]

    response_basis = data.bases[data.response_index]
    observed_anomaly = data.response.select_times([t - 1 for t in times])
    predicted_anomaly = observed_anomaly.with_values(
        basis.reconstruct_values(response_basis, predicted)
    )
    rmse = importance.evaluate_metric_columns(
        MetricSpec(MetricKind.SPATIAL_RMSE, basis=response_basis),
        observed_anomaly.values,
        predicted,
    )
    metric_error = importance.evaluate_metric_columns(
        data.metric(config.metric),
        data.observed(config.metric)[:, first - 1 :],
        predicted,
    )
    report = pd.DataFrame(
        {
            "split": split,
            "forecast_time": times,
            "partition": partition,
            "rmse": rmse,
            "metric_error": metric_error,
        }
    )[EvaluationColumns]

    observed = data.to_original_scale(observed_anomaly)
    restored = data.to_original_scale(predicted_anomaly)
    forecasts = _forecast_frame(
        split, times, partition, observed_anomaly, predicted_anomaly, observed, restored
    )
    weights = importance.latitude_weights(observed.latitudes)
    predictions = pd.DataFrame(
        {
            "split": split,
            "forecast_time": times,
            "time": list(observed.times),
            "partition": partition,
            "observed": importance.weighted_spatial_mean(observed.values, weights),
            "predicted": importance.weighted_spatial_mean(restored.values, weights),
        }
    )[PredictionColumns]
    return SplitEvaluation(report, forecasts, predictions)


class EvaluateWorkflow(BaseWorkflow):
    Name = "evaluate"

    def _settings(self, monthly: bool) -> List[Dict[str, Any]]:
        sweep = self.config.sweep
        base = self.config.data_hyperparams(monthly)
        if sweep is None:
            return [{"hyperparams": base}]
        settings = []
        for value in sweep.values:
            try:
                hyperparams = base.replace(**{sweep.param: value})
            except (TypeError, ValueError) as error:
                raise ConfigError(f"sweep.values: {value!r}: {error}") from error
            settings.append(
                {"hyperparams": hyperparams, "sweep_param": sweep.param, "sweep_value": value}
            )
        return settings

    async def run(self) -> List[Path]:
        config = self.config
        if not config.split_years:
            raise ConfigError("split_years: at least one split is required for evaluate")
        with self.stage("ingest"):
            raw = await preparation.load_variables(self)
        with self.stage("setup"):
            settings = self._settings(raw[0].is_monthly)
        with self.stage("evaluate"):
            jobs = [(s, split) for s in settings for split in config.split_years]
            tasks = [
                self.in_thread(evaluate_split, raw, config, s["hyperparams"], split)
                for s, split in jobs
            ]
            results: List[SplitEvaluation] = list(await asyncio.gather(*tasks))
        for (setting, _), result in zip(jobs, results):
            if "sweep_param" in setting:
                for frame in (result.report, result.forecasts, result.predictions):
                    frame["sweep_param"] = setting["sweep_param"]
                    frame["sweep_value"] = setting["sweep_value"]
        report = pd.concat([r.report for r in results], ignore_index=True)
        forecasts = pd.concat([r.forecasts for r in results], ignore_index=True)
        predictions = pd.concat([r.predictions for r in results], ignore_index=True)

        metadata = dict(
            config.to_metadata(),
            esn=settings[0]["hyperparams"].to_dict(),
            variables=[v.name for v in config.variables],
            response=config.response_name(),
            split_years=list(config.split_years),
            time_labels=list(raw[0].times),
        )
        with self.stage("write"):
            await data_io.write_table(self.output_path("evaluation.csv"), report, metadata)
            await data_io.write_table(self.output_path("forecasts.csv"), forecasts, metadata)
            await data_io.write_table(
                self.output_path("predictions.csv"), predictions, metadata
            )
            if config.plot:
                await plotting.export_plot(
                    report,
                    self.output_path("evaluation.svg"),
                    config.event_times,
                    raw[0].times,
                    "training and testing error",
                )
                for split in config.split_years:
                    await plotting.export_plot(
                        predictions[predictions["split"] == split],
                        self.output_path(f"predictions_{split}.svg"),
                        config.event_times,
                        raw[0].times,
                        f"{config.response_name()}, trained up to {split}",
                    )

        keys = ["split", "partition"]
        if config.sweep is not None:
            keys = ["sweep_value"] + keys
        summary = report.groupby(keys, sort=False)[["rmse", "metric_error"]].agg(
            ["count", "mean"]
        )
        self.print_table(
            keys + ["times", "mean rmse", f"mean {config.metric.value}"],
            [
                list(key if isinstance(key, tuple) else (key,))
                + [row[("rmse", "count")], row[("rmse", "mean")], row[("metric_error", "mean")]]
                for key, row in summary.iterrows()
            ],
        )
        return self.written


async def run_evaluation(config: ExperimentConfig) -> List[Path]:
    """Run the evaluate workflow and return the written files."""
    return await EvaluateWorkflow(config).execute()
