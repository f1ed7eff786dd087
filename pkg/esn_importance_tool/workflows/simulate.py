#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Write simulated datasets as gridded CSVs.

Each dataset goes to `dataset_<index>/` as Z1.csv, Z2.csv and ZY.csv with
integer times and the lattice x, y coordinates in the lon, lat columns, so
the files can be passed back to the fit, importance and evaluate workflows.
"""

import asyncio
import logging as log
from pathlib import Path
from typing import Final, List

from esn_importance_tool.core import simulator
from esn_importance_tool.core.simulator import SimDataset
from esn_importance_tool.workflows import data_io
from esn_importance_tool.workflows.base_workflow import BaseWorkflow

Logger: Final[log.Logger] = log.getLogger(__name__)


class SimulateWorkflow(BaseWorkflow):
    Name = "simulate"

    async def run(self) -> List[Path]:
        sim = self.config.simulation
        with self.stage("simulate"):
            tasks = [
                self.in_thread(simulator.simulate_dataset, sim, index)
                for index in range(sim.n_datasets)
            ]
            datasets: List[SimDataset] = list(await asyncio.gather(*tasks))
        with self.stage("write"):
            for dataset in datasets:
                metadata = {
                    "simulation": sim.to_dict(),
                    "dataset_index": dataset.dataset_index,
                }
                directory = f"dataset_{dataset.dataset_index}"
                for field in (dataset.Z1, dataset.Z2, dataset.ZY):
                    await data_io.export_gridded_csv(
                        field,
                        self.output_path(f"{directory}/{field.variable_name}.csv"),
                        metadata,
                    )
        Logger.info(
            f"Simulated {sim.n_datasets} datasets on a "
            f"{sim.grid_side}x{sim.grid_side} grid over {sim.n_times} times"
        )
        return self.written
