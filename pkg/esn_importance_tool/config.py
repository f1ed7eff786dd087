#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Experiment configuration.

A run is described by one JSON document (TOML with the same schema is also
accepted). Every key is checked against the schema and unknown keys are
rejected with their dotted path, e.g. `esn.n_hiden`. Relative paths are
resolved against the directory of the configuration file.

`example.json`, next to this module, lists every key with its default.
"""

import dataclasses
import enum
import json
import logging as log

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Final, FrozenSet, Iterable, Mapping, Tuple

from anyio import open_file

from esn_importance_tool.core.fields import TimeLabel
from esn_importance_tool.core.importance import MetricKind, Method
from esn_importance_tool.core.reservoir import EsnHyperparams
from esn_importance_tool.core.simulator import SimConfig, StudyGrid
from esn_importance_tool.errors import ConfigError, ValidationError

Logger: Final[log.Logger] = log.getLogger(__name__)

ExampleConfig: Final[Path] = Path(__file__).parent / "example.json"

Workflows: Final[Tuple[str, ...]] = (
    "simulate",
    "study",
    "fit",
    "importance",
    "evaluate",
    "plot",
)
DataWorkflows: Final[FrozenSet[str]] = frozenset({"fit", "importance", "evaluate"})
ClimateEmbeddingLength: Final[int] = 5
StudyAxes: Final[Tuple[str, ...]] = (
    "rho_z",
    "rho_delta",
    "phi_z",
    "phi_delta",
    "sigma_z",
    "sigma_delta",
    "sigma_eps",
)
TopLevelKeys: Final[FrozenSet[str]] = frozenset(
    {
        "workflow",
        "seed",
        "threads",
        "output",
        "esn",
        "simulation",
        "study",
        "variables",
        "response",
        "retained",
        "preprocess",
        "metric",
        "block_sizes",
        "methods",
        "replications",
        "split_years",
        "sweep",
        "event_times",
        "plot",
        "inputs",
    }
)


class Preprocess(str, enum.Enum):
    CLIMATOLOGY = "climatology"
    STANDARDIZE = "standardize"
    AUTO = "auto"


@dataclass(frozen=True)
class VariableSource:
    """A named gridded CSV input."""

    name: str
    path: Path


@dataclass(frozen=True)
class Sweep:
    """Values of one ESN hyperparameter to evaluate in turn."""

    param: str
    values: Tuple[Any, ...]

    def __post_init__(self):
        names = {f.name for f in dataclasses.fields(EsnHyperparams)}
        if self.param not in names:
            raise ConfigError(f"sweep.param: {self.param!r} is not an ESN hyperparameter")
        if not self.values:
            raise ConfigError("sweep.values: at least one value is required")


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings of one run.

    `block_sizes` is None when the document doesn't set it; the study then
    uses 1, 2 and 3 and the data workflows use 3. `esn_keys` holds the ESN
    settings the document gave explicitly.
    """

    workflow: str | None = None
    seed: int = 0
    threads: int = 1
    output: Path = Path("output")
    esn: EsnHyperparams = EsnHyperparams()
    simulation: SimConfig = SimConfig()
    study: Mapping[str, Tuple[float, ...]] = dataclasses.field(default_factory=dict)
    variables: Tuple[VariableSource, ...] = ()
    response: str | None = None
    retained: int | Mapping[str, int] = 5
    preprocess: Preprocess = Preprocess.AUTO
    metric: MetricKind = MetricKind.WEIGHTED_SPATIAL_RMSE
    block_sizes: Tuple[int, ...] | None = None
    methods: Tuple[Method, ...] = (Method.STPFI, Method.STZFI)
    replications: int = 10
    split_years: Tuple[int, ...] = ()
    sweep: Sweep | None = None
    event_times: Tuple[TimeLabel, ...] = ()
    plot: bool = False
    inputs: Tuple[Path, ...] = ()
    esn_keys: FrozenSet[str] = frozenset()

    def __post_init__(self):
        if self.workflow is not None and self.workflow not in Workflows:
            raise ConfigError(
                f"workflow: {self.workflow!r} is not one of {', '.join(Workflows)}"
            )
        if self.threads < 1:
            raise ConfigError("threads: must be at least 1")
        if self.replications < 1:
            raise ConfigError("replications: must be at least 1")
        if self.block_sizes is not None and (
            not self.block_sizes or min(self.block_sizes) < 1
        ):
            raise ConfigError("block_sizes: must be a nonempty list of positive sizes")
        if not self.methods:
            raise ConfigError("methods: at least one method is required")
        counts = (
            self.retained.values() if isinstance(self.retained, Mapping) else [self.retained]
        )
        if any(count < 1 for count in counts):
            raise ConfigError("retained: every count must be at least 1")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ConfigError("variables: names must be unique")
        if self.response is not None and self.response not in names:
            raise ConfigError(f"response: {self.response!r} is not a listed variable")

    def retained_for(self, name: str) -> int:
        """Number of principal components kept for a variable."""
        if isinstance(self.retained, Mapping):
            return self.retained.get(name, 5)
        return self.retained

    def response_name(self) -> str:
        """The response variable, the last listed one by default."""
        if not self.variables:
            raise ConfigError("variables: at least one variable is required")
        return self.response or self.variables[-1].name

    def data_block_sizes(self) -> Tuple[int, ...]:
        return self.block_sizes or (3,)

    def data_hyperparams(self, monthly: bool) -> EsnHyperparams:
        """ESN settings of a data workflow.

        Climatology runs embed the previous five months unless `esn.m` is set.

        :param monthly: whether the variables have `YYYY-MM` time labels
        :type monthly: bool
        :return: the hyperparameters to fit with
        :rtype: EsnHyperparams
        """
        climate = self.preprocess is Preprocess.CLIMATOLOGY or (
            self.preprocess is Preprocess.AUTO and monthly
        )
        if climate and "m" not in self.esn_keys:
            return self.esn.replace(m=ClimateEmbeddingLength)
        return self.esn

    def study_grid(self) -> StudyGrid:
        """The simulation study sweep described by `simulation` and `study`.

        :raises ConfigError: if a required sweep axis is missing
        """
        missing = [axis for axis in StudyAxes[:4] if axis not in self.study]
        if missing:
            raise ConfigError(f"study.{missing[0]}: required for the study workflow")
        sim = self.simulation
        axes = {axis: tuple(self.study[axis]) for axis in StudyAxes if axis in self.study}
        try:
            return StudyGrid(
                **axes,
                block_sizes=self.block_sizes or (1, 2, 3),
                methods=self.methods,
                n_datasets=sim.n_datasets,
                grid_side=sim.grid_side,
                n_times=sim.n_times,
                beta=sim.beta,
                retained=self.retained_for("Z1"),
                replications=self.replications,
                hyperparams=self.esn,
                seed=self.seed,
            )
        except ValidationError as error:
            raise ConfigError(f"study: {error}") from error

    def require_files(self) -> None:
        """Check that the inputs of the configured workflow exist.

        :raises ConfigError: naming the first missing file
        """
        if self.workflow in DataWorkflows:
            if len(self.variables) < 1:
                raise ConfigError("variables: at least one variable is required")
            paths = [v.path for v in self.variables]
        elif self.workflow == "plot":
            if not self.inputs:
                raise ConfigError("inputs: at least one CSV is required for plot")
            paths = list(self.inputs)
        else:
            return
        for path in paths:
            if not path.is_file():
                raise ConfigError(f"input file {path} doesn't exist")

    def with_overrides(
        self,
        seed: int | None = None,
        output: Path | None = None,
        threads: int | None = None,
    ) -> "ExperimentConfig":
        """Apply command line overrides. A new seed reseeds every stream."""
        changes: Dict[str, Any] = {}
        if seed is not None:
            changes.update(
                seed=seed,
                esn=self.esn.replace(seed=seed),
                simulation=dataclasses.replace(self.simulation, seed=seed),
            )
        if output is not None:
            changes["output"] = output
        if threads is not None:
            changes["threads"] = threads
        return dataclasses.replace(self, **changes)

    def to_metadata(self) -> Dict[str, Any]:
        """Settings echoed into output CSV headers."""
        return {
            "workflow": self.workflow,
            "seed": self.seed,
            "esn": self.esn.to_dict(),
            "retained": (
                dict(self.retained) if isinstance(self.retained, Mapping) else self.retained
            ),
            "preprocess": self.preprocess.value,
            "metric": self.metric.value,
            "replications": self.replications,
            "methods": [m.value for m in self.methods],
        }


def _check_keys(section: Any, allowed: Iterable[str], prefix: str) -> Dict[str, Any]:
    if not isinstance(section, Mapping):
        raise ConfigError(f"{prefix}: expected a table of settings")
    allowed = set(allowed)
    for key in section:
        if key not in allowed:
            path = f"{prefix}.{key}" if prefix else key
            raise ConfigError(f"{path}: unknown configuration key")
    return dict(section)


def _dataclass_section(cls, section: Any, prefix: str, seed: int):
    values = _check_keys(section, (f.name for f in dataclasses.fields(cls)), prefix)
    values.setdefault("seed", seed)
    try:
        return cls(**values)
    except (TypeError, ValidationError) as error:
        raise ConfigError(f"{prefix}: {error}") from error


def _sequence(document: Mapping[str, Any], key: str, convert=lambda v: v) -> Tuple:
    value = document[key]
    if not isinstance(value, list):
        raise ConfigError(f"{key}: expected a list")
    try:
        return tuple(convert(v) for v in value)
    except (TypeError, ValueError) as error:
        raise ConfigError(f"{key}: {error}") from error


def _resolve(base_dir: Path, value: Any, key: str) -> Path:
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected a path")
    path = Path(value)
    return path if path.is_absolute() else base_dir / path


def config_from_document(
    document: Mapping[str, Any], base_dir: Path = Path(".")
) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from a parsed document.

    :param document: parsed JSON or TOML document
    :type document: Mapping[str, Any]
    :param base_dir: directory relative paths are resolved against
    :type base_dir: pathlib.Path
    :return: the validated configuration
    :rtype: ExperimentConfig
    :raises ConfigError: on unknown keys or invalid values
    """
    document = _check_keys(document, TopLevelKeys, "")
    seed = document.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed: expected a nonnegative integer")

    settings: Dict[str, Any] = {"seed": seed}
    for key in ("workflow", "response"):
        if key in document:
            settings[key] = document[key]
    for key in ("threads", "replications"):
        if key in document:
            if not isinstance(document[key], int) or isinstance(document[key], bool):
                raise ConfigError(f"{key}: expected an integer")
            settings[key] = document[key]
    if "plot" in document:
        if not isinstance(document["plot"], bool):
            raise ConfigError("plot: expected true or false")
        settings["plot"] = document["plot"]
    if "output" in document:
        settings["output"] = _resolve(base_dir, document["output"], "output")

    settings["esn"] = _dataclass_section(EsnHyperparams, document.get("esn", {}), "esn", seed)
    settings["esn_keys"] = frozenset(document.get("esn", {}))
    settings["simulation"] = _dataclass_section(
        SimConfig, document.get("simulation", {}), "simulation", seed
    )
    study = _check_keys(document.get("study", {}), StudyAxes, "study")
    for axis, values in study.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"study.{axis}: expected a nonempty list of numbers")
    settings["study"] = {axis: tuple(float(v) for v in values) for axis, values in study.items()}

    if "variables" in document:
        variables = []
        for index, entry in enumerate(_sequence(document, "variables")):
            entry = _check_keys(entry, ("name", "path"), f"variables[{index}]")
            if "name" not in entry or "path" not in entry:
                raise ConfigError(f"variables[{index}]: name and path are required")
            variables.append(
                VariableSource(
                    str(entry["name"]),
                    _resolve(base_dir, entry["path"], f"variables[{index}].path"),
                )
            )
        settings["variables"] = tuple(variables)

    if "retained" in document:
        retained = document["retained"]
        if isinstance(retained, Mapping):
            if not all(isinstance(v, int) and not isinstance(v, bool) for v in retained.values()):
                raise ConfigError("retained: expected a table of integers")
            settings["retained"] = {str(k): v for k, v in retained.items()}
        elif isinstance(retained, int) and not isinstance(retained, bool):
            settings["retained"] = retained
        else:
            raise ConfigError("retained: expected an integer or a table of integers")

    try:
        if "preprocess" in document:
            settings["preprocess"] = Preprocess(document["preprocess"])
        if "metric" in document:
            settings["metric"] = MetricKind(document["metric"])
        if "methods" in document:
            settings["methods"] = _sequence(document, "methods", Method)
    except ValueError as error:
        raise ConfigError(str(error)) from error

    if "block_sizes" in document:
        settings["block_sizes"] = _sequence(document, "block_sizes", int)
    if "split_years" in document:
        settings["split_years"] = _sequence(document, "split_years", int)
    if "event_times" in document:
        settings["event_times"] = _sequence(document, "event_times")
    if "inputs" in document:
        settings["inputs"] = tuple(
            _resolve(base_dir, value, f"inputs[{i}]")
            for i, value in enumerate(_sequence(document, "inputs"))
        )
    if "sweep" in document:
        sweep = _check_keys(document["sweep"], ("param", "values"), "sweep")
        if "param" not in sweep or not isinstance(sweep.get("values"), list):
            raise ConfigError("sweep: param and a list of values are required")
        settings["sweep"] = Sweep(sweep["param"], tuple(sweep["values"]))

    config = ExperimentConfig(**settings)
    Logger.debug(f"Loaded configuration for workflow {config.workflow}")
    return config


def parse_config(text: str, suffix: str = ".json", base_dir: Path = Path(".")) -> ExperimentConfig:
    """Parse a JSON (or, for a `.toml` suffix, TOML) configuration text."""
    try:
        if suffix.lower() == ".toml":
            document = tomllib.loads(text)
        else:
            document = json.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as error:
        raise ConfigError(f"configuration is not valid {suffix.lstrip('.')}: {error}") from error
    return config_from_document(document, base_dir)


async def load_config(path: Path) -> ExperimentConfig:
    """Read and parse a configuration file.

    :param path: path to a `.json` or `.toml` file
    :type path: pathlib.Path
    :return: the validated configuration
    :rtype: ExperimentConfig
    :raises ConfigError: on invalid content
    :raises OSError: if the file can't be read
    """
    async with await open_file(path) as f:
        text: str = await f.read()
    return parse_config(text, path.suffix, path.parent)
