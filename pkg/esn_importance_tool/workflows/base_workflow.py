#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Provides a base class for the tool's workflows."""

import abc
import contextlib
import logging as log
from pathlib import Path
from typing import Any, Callable, Final, Iterator, List, Sequence

import anyio
import anyio.to_thread
import tabulate

from esn_importance_tool.config import ExperimentConfig
from esn_importance_tool.errors import EsnImportanceError, WorkflowError

Logger: Final[log.Logger] = log.getLogger(__name__)


class BaseWorkflow(abc.ABC):
    """An abstract base class for workflows.

    Subclasses set `Name` and implement run(). CPU-bound steps go through
    in_thread(), which shares one capacity limiter of `config.threads`
    threads across the whole workflow.

    Methods:
        - setup: create the output directory and the thread limiter
        - run: do the work, returning the written files
        - teardown: release what setup created
        - execute: setup, run and teardown
    """

    Name: str = ""

    def __init__(self, config: ExperimentConfig):
        self.config: ExperimentConfig = config
        self.limiter: anyio.CapacityLimiter | None = None
        self.written: List[Path] = []

    async def setup(self) -> None:
        """Check inputs, create the output directory and the thread limiter."""
        with self.stage("setup"):
            self.config.require_files()
            self.config.output.mkdir(parents=True, exist_ok=True)
        self.limiter = anyio.CapacityLimiter(self.config.threads)
        Logger.debug(f"{self.Name}: {self.config.threads} worker threads")

    async def teardown(self) -> None:
        self.limiter = None

    @abc.abstractmethod
    async def run(self) -> List[Path]:
        """Run the workflow.

        :return: paths of the files written
        :rtype: List[Path]
        """
        ...

    async def execute(self) -> List[Path]:
        await self.setup()
        try:
            return await self.run()
        finally:
            await self.teardown()

    async def in_thread(self, func: Callable[..., Any], *args: Any) -> Any:
        """Run a blocking function in a worker thread, within the limiter."""
        return await anyio.to_thread.run_sync(func, *args, limiter=self.limiter)

    @contextlib.contextmanager
    def stage(self, name: str) -> Iterator[None]:
        """Re-raise failures inside the block as WorkflowError naming the stage."""
        try:
            yield
        except WorkflowError:
            raise
        except (EsnImportanceError, OSError) as error:
            Logger.debug(f"{self.Name} failed at {name}: {error!r}")
            raise WorkflowError(f"{self.Name}/{name}", error) from error

    def output_path(self, name: str) -> Path:
        path = self.config.output / name
        self.written.append(path)
        return path

    @staticmethod
    def print_table(headers: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
        """Prints rows to the console in a table format."""
        table: str = tabulate.tabulate(
            rows, headers=headers, tablefmt="pretty", floatfmt=".4g"
        )
        print(table)
