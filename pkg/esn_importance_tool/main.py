#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import argparse
import asyncio
import dataclasses
import logging as log
import sys
from pathlib import Path
from typing import Any, Dict, Final, List, Type

from esn_importance_tool.config import ExperimentConfig, load_config
from esn_importance_tool.errors import EsnImportanceError, WorkflowError
from esn_importance_tool.workflows.base_workflow import BaseWorkflow
from esn_importance_tool.workflows.evaluate import EvaluateWorkflow
from esn_importance_tool.workflows.fit import FitWorkflow
from esn_importance_tool.workflows.importance import ImportanceWorkflow
from esn_importance_tool.workflows.plot import PlotWorkflow
from esn_importance_tool.workflows.simulate import SimulateWorkflow
from esn_importance_tool.workflows.study import StudyWorkflow

Logger: Final[log.Logger] = log.getLogger(__name__)

ExitOk: Final[int] = 0
ExitValidation: Final[int] = 1
ExitIo: Final[int] = 2

WorkflowClasses: Dict[str, Type[BaseWorkflow]] = {
    SimulateWorkflow.Name: SimulateWorkflow,
    StudyWorkflow.Name: StudyWorkflow,
    FitWorkflow.Name: FitWorkflow,
    ImportanceWorkflow.Name: ImportanceWorkflow,
    EvaluateWorkflow.Name: EvaluateWorkflow,
    PlotWorkflow.Name: PlotWorkflow,
}

WorkflowHelp: Final[Dict[str, str]] = {
    "simulate": "write simulated datasets as gridded CSVs",
    "study": "run the simulation study and write averaged importance per combination",
    "fit": "fit an ESN on gridded CSVs and save the model",
    "importance": "compute stPFI and stZFI on gridded CSVs",
    "evaluate": "report training and testing errors for blocked splits in time",
    "plot": "render importance or evaluation CSVs as SVG charts",
}


async def configure_logging(enable_debug: bool = False) -> None:
    """Configure logging for the application. By default, the logging level is
    INFO. If enable_debug is True, the logging level is set to DEBUG.

    :param enable_debug: Enable debug logging
    :type enable_debug: bool
    :return: None
    """
    if enable_debug:
        log_level = log.DEBUG
    else:
        log_level = log.INFO

    log.basicConfig(
        stream=sys.stderr,
        level=log_level,
        format="%(levelname)s:%(name)s:%(lineno)d:%(message)s",
    )


def configure_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        help="path to a JSON (or TOML) experiment configuration",
        type=Path,
        default=None,
    )
    common.add_argument(
        "--seed",
        help="root seed of every random stream, overrides the configuration",
        type=int,
        default=None,
    )
    common.add_argument(
        "--output",
        help="output directory, overrides the configuration",
        type=Path,
        default=None,
    )
    common.add_argument(
        "--threads",
        help="number of worker threads, results don't depend on it",
        type=int,
        default=None,
    )
    common.add_argument(
        "-v",
        "--verbose",
        action="store_true",
        help="print debugging information",
    )

    parser = argparse.ArgumentParser(
        prog="esn-importance",
        description="Fit echo state networks on spatio-temporal data and "
        "compute block-wise permutation and zeroed feature importance over time",
    )
    subparsers = parser.add_subparsers(dest="workflow", required=True)
    for name in WorkflowClasses:
        subparsers.add_parser(name, parents=[common], help=WorkflowHelp[name])
    return parser


def parse_args(args: List[str]) -> Dict[str, Any]:
    """Parse arguments from a list and return them as a dictionary.

    Example:
    >>> parse_args(['study', '--seed', '3'])["seed"]
    3

    :param args: A list of arguments
    :type args: List[str]
    :return: A dictionary of arguments
    :rtype: Dict[str, Any]
    """
    arg_parser: argparse.ArgumentParser = configure_parser()
    args = arg_parser.parse_args(args)
    return vars(args)


async def build_config(args: Dict[str, Any]) -> ExperimentConfig:
    """Load the configuration file, if any, and apply command line flags."""
    if args["config"] is not None:
        config = await load_config(args["config"])
    else:
        config = ExperimentConfig()
    if config.workflow not in (None, args["workflow"]):
        Logger.warning(
            f"Configuration is for {config.workflow}, running {args['workflow']}"
        )
    config = config.with_overrides(args["seed"], args["output"], args["threads"])
    return dataclasses.replace(config, workflow=args["workflow"])


def exit_code(error: BaseException) -> int:
    """Exit code of a failure: 2 for I/O errors, 1 otherwise."""
    if isinstance(error, WorkflowError):
        error = error.cause
    if isinstance(error, OSError):
        return ExitIo
    return ExitValidation


async def main(args: List[str]) -> int:
    args = parse_args(args)
    await configure_logging(args["verbose"])
    try:
        config = await build_config(args)
        workflow = WorkflowClasses[config.workflow](config)
        written = await workflow.execute()
    except (EsnImportanceError, OSError) as error:
        Logger.error(str(error))
        return exit_code(error)
    Logger.info(f"{config.workflow}: wrote {len(written)} files to {config.output}")
    return ExitOk


def run() -> None:
    sys.exit(asyncio.run(main(sys.argv[1:])))


if __name__ == "__main__":
    run()
