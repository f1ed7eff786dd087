from typing import Sequence

import numpy as np
import pytest

from esn_importance_tool.core.fields import SpatioTemporalField
from esn_importance_tool.core.reservoir import EsnHyperparams, EsnModel, fit


def make_field(
    values: Sequence[Sequence[float]],
    times: Sequence | None = None,
    locations: Sequence[Sequence[float]] | None = None,
    name: str = "z",
) -> SpatioTemporalField:
    values = np.asarray(values, dtype=float)
    n_locations, n_times = values.shape
    if times is None:
        times = range(1, n_times + 1)
    if locations is None:
        locations = [(float(i), 0.0) for i in range(n_locations)]
    return SpatioTemporalField(np.asarray(locations, dtype=float), tuple(times), values, name)


def monthly_labels(start_year: int, n_months: int) -> list:
    return [f"{start_year + i // 12:04d}-{i % 12 + 1:02d}" for i in range(n_months)]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240417)


@pytest.fixture
def two_variable_data(rng):
    """Inputs of two 3-coefficient variables and outputs driven by the second."""
    n_times = 60
    inputs = rng.standard_normal((6, n_times))
    outputs = np.zeros((2, n_times))
    outputs[:, 1:] = 0.8 * inputs[3:5, :-1]
    outputs += 0.05 * rng.standard_normal(outputs.shape)
    return inputs, outputs


@pytest.fixture
def small_model(two_variable_data) -> EsnModel:
    inputs, outputs = two_variable_data
    hyperparams = EsnHyperparams(n_h=20, a_u=0.5, pi_u=0.5, seed=3)
    return fit(hyperparams, inputs, outputs, input_blocks=(3, 3))
