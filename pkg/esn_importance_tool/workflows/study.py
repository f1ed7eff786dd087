#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
The simulation study.

For each parameter combination of the configured grid, datasets are
simulated and analyzed in worker threads and their importance series
averaged. Results go to `study_<index>.csv`, one file per combination in
grid order, with the combination's parameters repeated on every row.
"""

import asyncio
import logging as log
from pathlib import Path
from typing import Final, List

from esn_importance_tool.core import importance, simulator
from esn_importance_tool.core.importance import ImportanceSeries
from esn_importance_tool.core.simulator import SimConfig, StudyGrid, StudyResult
from esn_importance_tool.workflows import data_io, plotting
from esn_importance_tool.workflows.base_workflow import BaseWorkflow

Logger: Final[log.Logger] = log.getLogger(__name__)

CombinationColumns: Final[List[str]] = [
    "sigma_z",
    "sigma_delta",
    "sigma_eps",
    "phi_z",
    "phi_delta",
    "rho_z",
    "rho_delta",
    "n_datasets",
]


def _simulate_and_analyze(
    config: SimConfig, index: int, grid: StudyGrid
) -> List[ImportanceSeries]:
    return simulator.analyze_dataset(simulator.simulate_dataset(config, index), grid)


class StudyWorkflow(BaseWorkflow):
    Name = "study"

    async def run(self) -> List[Path]:
        with self.stage("setup"):
            grid = self.config.study_grid()
        combinations = grid.combinations()
        rows = []
        for number, combination in enumerate(combinations):
            Logger.info(f"Combination {number + 1}/{len(combinations)}")
            with self.stage(f"combination {number}"):
                tasks = [
                    self.in_thread(_simulate_and_analyze, combination, index, grid)
                    for index in range(combination.n_datasets)
                ]
                per_dataset = await asyncio.gather(*tasks)
                result = simulator.summarize_combination(combination, per_dataset, grid)
            with self.stage("write"):
                await self._write(number, result)
            rows += self._summary_rows(number, result)
        self.print_table(
            ["combination", "variable", "method", "block", "peak time", "peak"], rows
        )
        return self.written

    async def _write(self, number: int, result: StudyResult) -> None:
        frame = data_io.importance_frame(result.series)
        parameters = result.config.to_dict()
        for column in CombinationColumns:
            frame[column] = parameters[column]
        metadata = dict(
            result.metadata, simulation=parameters, combination=number
        )
        await data_io.write_table(
            self.output_path(f"study_{number}.csv"), frame, metadata
        )
        if self.config.plot:
            await plotting.export_plot(
                result.series,
                self.output_path(f"study_{number}.svg"),
                self.config.event_times,
                title=f"combination {number}",
            )

    @staticmethod
    def _summary_rows(number: int, result: StudyResult) -> List[list]:
        rows = []
        for s in result.series:
            summary = importance.importance_summary(s)
            rows.append(
                [
                    number,
                    s.query.label,
                    s.query.method.value,
                    s.query.block_size,
                    summary["peak_time"],
                    summary["peak"],
                ]
            )
        return rows
