#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Render importance or evaluation CSVs as SVG charts, `<stem>.svg` each."""

import logging as log
from pathlib import Path
from typing import Final, List

from esn_importance_tool.workflows import data_io, plotting
from esn_importance_tool.workflows.base_workflow import BaseWorkflow

Logger: Final[log.Logger] = log.getLogger(__name__)


class PlotWorkflow(BaseWorkflow):
    Name = "plot"

    async def run(self) -> List[Path]:
        for path in self.config.inputs:
            with self.stage(f"read {path.name}"):
                frame, metadata = await self.in_thread(data_io.read_table, path)
            with self.stage(f"plot {path.name}"):
                await plotting.export_plot(
                    frame,
                    self.output_path(f"{path.stem}.svg"),
                    self.config.event_times,
                    metadata.get("time_labels"),
                    path.stem,
                )
        return self.written
