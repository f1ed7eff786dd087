#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Fit an ESN on gridded data and save it as `model.json`."""

import logging as log
from pathlib import Path
from typing import Final, List

import numpy as np

from esn_importance_tool.core import importance, reservoir
from esn_importance_tool.workflows import data_io, preparation
from esn_importance_tool.workflows.base_workflow import BaseWorkflow

Logger: Final[log.Logger] = log.getLogger(__name__)


class FitWorkflow(BaseWorkflow):
    Name = "fit"

    async def run(self) -> List[Path]:
        config = self.config
        with self.stage("ingest"):
            raw = await preparation.load_variables(self)
        with self.stage("preprocess"):
            data = await self.in_thread(preparation.prepare, raw, config)
            hyperparams = config.data_hyperparams(raw[0].is_monthly)
        with self.stage("fit"):
            model = await self.in_thread(
                reservoir.fit, hyperparams, data.inputs, data.outputs, None, data.input_blocks
            )
            fitted = await self.in_thread(reservoir.forecast, model, data.inputs)
            first = model.first_forecast_time
            errors = importance.evaluate_metric_columns(
                data.metric(config.metric),
                data.observed(config.metric)[:, first - 1 :],
                fitted,
            )
        with self.stage("write"):
            await data_io.save_model(model, self.output_path("model.json"))

        rows = [
            ["lambda_w", model.reservoir.lambda_w],
            ["residual variance", model.residual_variance],
            [f"training {config.metric.value}", float(np.mean(errors))],
        ]
        rows += [
            [f"{name} variance kept", b.explained_variance_ratio()]
            for name, b in zip(data.names, data.bases)
        ]
        self.print_table(["diagnostic", "value"], rows)
        return self.written
