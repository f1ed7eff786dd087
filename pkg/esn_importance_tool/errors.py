#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Exceptions raised by the ESN importance tool.

Every error raised on purpose by the package derives from
`EsnImportanceError`. Errors caused by bad input (as opposed to failing I/O)
also derive from `ValueError` through `ValidationError`, which is what the CLI
maps to exit code 1.
"""

from typing import Tuple


class EsnImportanceError(Exception):
    """Base class for all errors raised by the tool."""


class ValidationError(EsnImportanceError, ValueError):
    """Input data or arguments violate a precondition."""


class ConfigError(ValidationError):
    """The experiment configuration document is invalid."""


class DegenerateStatisticsError(ValidationError):
    """A location (and month) has zero standard deviation or too few values.

    Attributes:
        - location: index of the offending location
        - month: calendar month (1-12) for climatologies, None otherwise
    """

    def __init__(self, message: str, location: int, month: int | None = None):
        super().__init__(message)
        self.location: int = location
        self.month: int | None = month


class IngestError(ValidationError):
    """A gridded CSV file doesn't match the expected schema.

    Attributes:
        - row: 1-indexed line number in the file, None for whole-file errors
        - cell: (lat, lon, time) of a missing lattice cell, if any
    """

    def __init__(
        self,
        message: str,
        row: int | None = None,
        cell: Tuple[float, float, str] | None = None,
    ):
        super().__init__(message)
        self.row: int | None = row
        self.cell: Tuple[float, float, str] | None = cell


class DegenerateReservoirError(EsnImportanceError):
    """The sampled recurrent matrix kept having a zero spectral radius."""


class IllConditionedError(ValidationError):
    """The ridge normal equations are numerically singular."""


class WorkflowError(EsnImportanceError):
    """Wraps a failure with the name of the workflow stage that raised it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage: str = stage
        self.cause: BaseException = cause
