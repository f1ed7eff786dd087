#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Feature importance on gridded climate data.

Every listed variable, the response included, is converted to climatologies,
reduced to its leading principal components and fed to one ESN forecasting
the response's coefficients. stPFI and stZFI are then computed for each
variable at each block size over the full period, with the latitude
weighted error as the default metric.

Output: `importance.csv` and, with `plot` enabled, one SVG per method and
block size.
"""

import asyncio
import logging as log
from pathlib import Path
from typing import Final, List

from esn_importance_tool.config import ExperimentConfig
from esn_importance_tool.core import importance, reservoir
from esn_importance_tool.core.importance import ImportanceQuery, ImportanceSeries
from esn_importance_tool.workflows import data_io, plotting, preparation
from esn_importance_tool.workflows.base_workflow import BaseWorkflow

Logger: Final[log.Logger] = log.getLogger(__name__)


class ImportanceWorkflow(BaseWorkflow):
    Name = "importance"

    async def run(self) -> List[Path]:
        config = self.config
        with self.stage("ingest"):
            raw = await preparation.load_variables(self)
        with self.stage("preprocess"):
            data = await self.in_thread(preparation.prepare, raw, config)
            hyperparams = config.data_hyperparams(raw[0].is_monthly)
        with self.stage("fit"):
            model = await self.in_thread(
                reservoir.fit,
                hyperparams,
                data.inputs,
                data.outputs,
                None,
                data.input_blocks,
            )
        Logger.info(
            f"Fitted ESN on {data.inputs.shape[1]} times, "
            f"residual variance {model.residual_variance:.4g}"
        )

        metric = data.metric(config.metric)
        observed = data.observed(config.metric)
        queries = [
            ImportanceQuery(
                variable_index=k,
                block_size=block_size,
                tau=hyperparams.tau,
                method=method,
                replications=config.replications,
                rng_seed=config.seed,
                variable_name=name,
            )
            for k, name in enumerate(data.names)
            for method in config.methods
            for block_size in config.data_block_sizes()
        ]
        with self.stage("importance"):
            tasks = [
                self.in_thread(
                    importance.compute_importance,
                    model,
                    data.inputs,
                    observed,
                    query,
                    metric,
                )
                for query in queries
            ]
            series: List[ImportanceSeries] = list(await asyncio.gather(*tasks))

        metadata = dict(
            config.to_metadata(),
            esn=hyperparams.to_dict(),
            variables=list(data.names),
            response=data.names[data.response_index],
            input_blocks=list(data.input_blocks),
            lambda_w=model.reservoir.lambda_w,
            time_labels=list(data.time_labels),
        )
        with self.stage("write"):
            await data_io.write_table(
                self.output_path("importance.csv"),
                data_io.importance_frame(series),
                metadata,
            )
            if config.plot:
                await self._plot(series, data.time_labels)
        self._print_summary(series, data.time_labels)
        return self.written

    async def _plot(self, series: List[ImportanceSeries], time_labels) -> None:
        for method in self.config.methods:
            for block_size in self.config.data_block_sizes():
                selected = [
                    s
                    for s in series
                    if s.query.method is method and s.query.block_size == block_size
                ]
                await plotting.export_plot(
                    selected,
                    self.output_path(f"importance_{method.value}_b{block_size}.svg"),
                    self.config.event_times,
                    time_labels,
                    f"{method.value}, block size {block_size}",
                )

    def _print_summary(self, series: List[ImportanceSeries], time_labels) -> None:
        rows = []
        for s in series:
            summary = importance.importance_summary(s)
            rows.append(
                [
                    s.query.label,
                    s.query.method.value,
                    s.query.block_size,
                    time_labels[summary["peak_time"] - 1],
                    summary["peak"],
                    summary["mean"],
                ]
            )
        self.print_table(
            ["variable", "method", "block", "peak time", "peak", "mean"], rows
        )


async def run_climate_workflow(config: ExperimentConfig) -> List[Path]:
    """Run the importance workflow and return the written files."""
    return await ImportanceWorkflow(config).execute()
