#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Synthetic spatio-temporal data with a known input-response relationship.

## Data generating mechanism

On a grid_side x grid_side lattice over [0, 1] x [0, 1]:

    Z_k,t   = mu_k,t + rho_z Z_k,t-1 + eta_k,t,   eta ~ N(0, Sigma(phi_z, sigma_z^2))
    delta_t = rho_delta delta_t-1 + xi_t,         xi ~ N(0, Sigma(phi_delta, sigma_delta^2))
    Z_Y,t   = beta Z_2,t + delta_t + eps_t,       eps iid N(0, sigma_eps^2)

with Z_k,1 ~ N(mu_k,1 1, Sigma), delta_1 ~ N(0, Sigma) and Gaussian bump means
mu_1 and mu_2 peaking at t = 20 and t = 45. Sigma is a squared exponential
kernel. Z_1 plays no part in the response.

## Random streams

Each dataset draws its components from independent streams keyed by
(seed, dataset_index, component), so datasets can be generated in any order
or in parallel with identical results.

## Study

`run_study` sweeps SimConfig combinations; for every combination it
simulates `n_datasets` datasets, standardizes each variable, keeps 5
principal components per variable, fits an ESN forecasting Z_Y from lagged
Z_1 and Z_2, computes stPFI and stZFI for both covariates at every block
size and averages the series over datasets.
"""

import dataclasses
import itertools
import logging as log
import math
from dataclasses import dataclass
from typing import Any, Dict, Final, List, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

from esn_importance_tool.core import basis, fields, importance, reservoir
from esn_importance_tool.core.fields import SpatioTemporalField
from esn_importance_tool.core.importance import (
    ImportanceQuery,
    ImportanceSeries,
    MetricKind,
    MetricSpec,
    Method,
)
from esn_importance_tool.core.reservoir import EsnHyperparams
from esn_importance_tool.errors import ValidationError

Logger: Final[log.Logger] = log.getLogger(__name__)

MeanCenters: Final[Dict[int, float]] = {1: 20.0, 2: 45.0}
MeanWidth: Final[float] = 6.0
ComponentTags: Final[Dict[str, int]] = {
    "z1": 1,
    "z2": 2,
    "delta": 3,
    "eps": 4,
    "esn": 5,
    "importance": 6,
}
CovariateNames: Final[Tuple[str, str]] = ("Z1", "Z2")
JitterScale: Final[float] = 1e-10
NegativeEigenTolerance: Final[float] = 1e-8


@dataclass(frozen=True)
class SimConfig:
    """Parameters of the data generating mechanism.

    Attributes:
        - grid_side: lattice points per axis, N = grid_side ** 2
        - n_times: T
        - sigma_z, sigma_delta, sigma_eps: standard deviations of the covariate
          innovations, random effect innovations and white noise
        - phi_z, phi_delta: spatial ranges of the squared exponential kernels
        - rho_z, rho_delta: temporal autoregressive coefficients
        - beta: coefficient of Z_2 in the response
        - n_datasets: datasets per parameter combination
        - seed: root seed of all random streams
    """

    grid_side: int = 10
    n_times: int = 70
    sigma_z: float = 0.2
    sigma_delta: float = 0.2
    sigma_eps: float = 0.2
    phi_z: float = 0.5
    phi_delta: float = 0.5
    rho_z: float = 0.9
    rho_delta: float = 0.5
    beta: float = 1.0
    n_datasets: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.grid_side < 2:
            raise ValidationError("grid_side must be at least 2")
        if self.n_times < 1:
            raise ValidationError("n_times must be at least 1")
        for name in ("sigma_z", "sigma_delta", "sigma_eps", "phi_z", "phi_delta"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.n_datasets < 1:
            raise ValidationError("n_datasets must be at least 1")
        if abs(self.rho_z) >= 1 or abs(self.rho_delta) >= 1:
            Logger.debug("Autoregressive coefficient outside (-1, 1), process is not stationary")

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class SimDataset:
    """One simulated dataset, with the random effect and noise kept for checks."""

    Z1: SpatioTemporalField
    Z2: SpatioTemporalField
    ZY: SpatioTemporalField
    delta: np.ndarray
    eps: np.ndarray
    config: SimConfig
    dataset_index: int


def component_rng(seed: int, dataset_index: int, component: str) -> np.random.Generator:
    """Independent random stream of one component of one dataset."""
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(dataset_index, ComponentTags[component]))
    )


def derived_seed(seed: int, dataset_index: int, component: str) -> int:
    """A 32-bit seed drawn from the (seed, dataset, component) stream."""
    sequence = np.random.SeedSequence(
        seed, spawn_key=(dataset_index, ComponentTags[component])
    )
    return int(sequence.generate_state(1)[0])


def lattice_locations(grid_side: int) -> np.ndarray:
    """Equally spaced grid_side x grid_side points over [0, 1]^2, row-major.

    :param grid_side: points per axis, at least 2
    :type grid_side: int
    :return: (grid_side ** 2) x 2 array of (x, y) coordinates
    :rtype: np.ndarray
    """
    if grid_side < 2:
        raise ValidationError("grid_side must be at least 2")
    axis = np.linspace(0.0, 1.0, grid_side)
    return np.array(list(itertools.product(axis, axis)))


def sq_exp_covariance(locations: np.ndarray, phi: float, sigma: float) -> np.ndarray:
    """Squared exponential covariance sigma^2 exp(-d^2 / (2 phi^2))."""
    if phi <= 0 or sigma <= 0:
        raise ValidationError("phi and sigma must be positive")
    squared_distances = cdist(locations, locations, metric="sqeuclidean")
    return sigma**2 * np.exp(-squared_distances / (2 * phi**2))


def mean_function(k: int, t: float) -> float:
    """Gaussian bump mean of covariate k (1 or 2) at time t."""
    if k not in MeanCenters:
        raise ValidationError(f"covariate index must be 1 or 2, got {k}")
    scale = 1.0 / (math.sqrt(2 * math.pi) * MeanWidth)
    return scale * math.exp(-((t - MeanCenters[k]) ** 2) / (2 * MeanWidth**2))


def covariance_factor(cov: np.ndarray) -> np.ndarray:
    """A matrix L with L L' = cov (up to jitter), for drawing N(0, cov).

    Uses a Cholesky factor of cov + 1e-10 * max(diag) I, falling back to a
    symmetric eigendecomposition with negative eigenvalues clipped.

    :raises ValidationError: if cov is not symmetric positive semidefinite
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValidationError("covariance must be a square matrix")
    if not np.allclose(cov, cov.T):
        raise ValidationError("covariance must be symmetric")
    scale = float(np.max(np.abs(np.diag(cov)))) if cov.size else 0.0
    if scale == 0.0:
        if np.any(cov):
            raise ValidationError("covariance has a zero diagonal but nonzero entries")
        return np.zeros_like(cov)
    try:
        return scipy.linalg.cholesky(
            cov + JitterScale * scale * np.eye(cov.shape[0]), lower=True
        )
    except scipy.linalg.LinAlgError:
        eigenvalues, vectors = scipy.linalg.eigh(cov)
        if eigenvalues.min() < -NegativeEigenTolerance * scale:
            raise ValidationError(
                f"covariance is not positive semidefinite "
                f"(smallest eigenvalue {eigenvalues.min():.3g})"
            )
        Logger.debug("Cholesky failed, using eigendecomposition factor")
        return vectors * np.sqrt(np.clip(eigenvalues, 0.0, None))


def sample_mvn(
    mean: np.ndarray,
    cov: np.ndarray,
    rng: np.random.Generator,
    factor: np.ndarray | None = None,
) -> np.ndarray:
    """Draw from N(mean, cov); pass `factor` to reuse a `covariance_factor`."""
    mean = np.asarray(mean, dtype=float)
    if factor is None:
        factor = covariance_factor(cov)
    return mean + factor @ rng.standard_normal(mean.shape[0])


def simulate_ar_process(
    mean_series: Sequence[float] | np.ndarray | None,
    rho: float,
    cov: np.ndarray,
    n_times: int,
    rng: np.random.Generator,
    return_innovations: bool = False,
) -> np.ndarray | Tuple[np.ndarray, np.ndarray]:
    """Simulate Z_t = mu_t + rho Z_t-1 + eta_t with Z_1 ~ N(mu_1, cov).

    :param mean_series: mean mu_t of each time, either T scalars (added at
        every location) or an N x T matrix, None for a zero mean
    :param rho: autoregressive coefficient
    :param cov: N x N innovation covariance
    :param n_times: T
    :param rng: random stream
    :param return_innovations: also return the N x T draws (column 0 is the
        initial deviation Z_1 - mu_1)
    :return: N x T matrix, and the innovations if requested
    """
    if n_times < 1:
        raise ValidationError("n_times must be at least 1")
    factor = covariance_factor(cov)
    n_locations = factor.shape[0]
    means = np.zeros(n_times) if mean_series is None else np.asarray(mean_series, dtype=float)
    if means.ndim == 1 and means.shape == (n_times,):
        means = np.broadcast_to(means, (n_locations, n_times))
    if means.shape != (n_locations, n_times):
        raise ValidationError(
            f"mean series of shape {means.shape} for {n_locations} locations and {n_times} times"
        )
    innovations = np.empty((n_locations, n_times))
    values = np.empty((n_locations, n_times))
    for t in range(n_times):
        innovations[:, t] = sample_mvn(np.zeros(n_locations), cov, rng, factor)
        previous = rho * values[:, t - 1] if t else 0.0
        values[:, t] = means[:, t] + previous + innovations[:, t]
    if return_innovations:
        return values, innovations
    return values


def simulate_dataset(config: SimConfig, dataset_index: int) -> SimDataset:
    """Simulate covariates Z1, Z2, random effect, noise and response ZY."""
    locations = lattice_locations(config.grid_side)
    times = tuple(range(1, config.n_times + 1))
    cov_z = sq_exp_covariance(locations, config.phi_z, config.sigma_z)
    cov_delta = sq_exp_covariance(locations, config.phi_delta, config.sigma_delta)

    covariates = []
    for k in (1, 2):
        means = [mean_function(k, t) for t in times]
        rng = component_rng(config.seed, dataset_index, f"z{k}")
        covariates.append(
            simulate_ar_process(means, config.rho_z, cov_z, config.n_times, rng)
        )
    delta = simulate_ar_process(
        None,
        config.rho_delta,
        cov_delta,
        config.n_times,
        component_rng(config.seed, dataset_index, "delta"),
    )
    eps = component_rng(config.seed, dataset_index, "eps").normal(
        0.0, config.sigma_eps, (locations.shape[0], config.n_times)
    )
    response = covariates[1] * config.beta + delta + eps
    return SimDataset(
        Z1=SpatioTemporalField(locations, times, covariates[0], "Z1"),
        Z2=SpatioTemporalField(locations, times, covariates[1], "Z2"),
        ZY=SpatioTemporalField(locations, times, response, "ZY"),
        delta=delta,
        eps=eps,
        config=config,
        dataset_index=dataset_index,
    )


@dataclass(frozen=True)
class StudyGrid:
    """Parameter sweep of a simulation study.

    The autoregressive and range grids have no defaults; every other axis
    defaults to the low/high variability values 0.2 and 4.
    """

    rho_z: Tuple[float, ...]
    rho_delta: Tuple[float, ...]
    phi_z: Tuple[float, ...]
    phi_delta: Tuple[float, ...]
    sigma_z: Tuple[float, ...] = (0.2, 4.0)
    sigma_delta: Tuple[float, ...] = (0.2, 4.0)
    sigma_eps: Tuple[float, ...] = (0.2, 4.0)
    block_sizes: Tuple[int, ...] = (1, 2, 3)
    methods: Tuple[Method, ...] = (Method.STPFI, Method.STZFI)
    n_datasets: int = 50
    grid_side: int = 10
    n_times: int = 70
    beta: float = 1.0
    retained: int = 5
    replications: int = 10
    hyperparams: EsnHyperparams = EsnHyperparams()
    seed: int = 0

    def __post_init__(self):
        for name in ("rho_z", "rho_delta", "phi_z", "phi_delta", "sigma_z",
                     "sigma_delta", "sigma_eps", "block_sizes", "methods"):
            if not getattr(self, name):
                raise ValidationError(f"study grid axis {name} is empty")
        object.__setattr__(self, "methods", tuple(Method(m) for m in self.methods))

    def combinations(self) -> List[SimConfig]:
        """One SimConfig per point of the grid, in a fixed order."""
        axes = itertools.product(
            self.sigma_z, self.sigma_delta, self.sigma_eps,
            self.phi_z, self.phi_delta, self.rho_z, self.rho_delta,
        )
        return [
            SimConfig(
                grid_side=self.grid_side,
                n_times=self.n_times,
                sigma_z=sz,
                sigma_delta=sd,
                sigma_eps=se,
                phi_z=pz,
                phi_delta=pd,
                rho_z=rz,
                rho_delta=rd,
                beta=self.beta,
                n_datasets=self.n_datasets,
                seed=self.seed,
            )
            for sz, sd, se, pz, pd, rz, rd in axes
        ]

    def metadata(self) -> Dict[str, Any]:
        return {
            "hyperparams": self.hyperparams.to_dict(),
            "retained": self.retained,
            "replications": self.replications,
            "block_sizes": list(self.block_sizes),
            "methods": [m.value for m in self.methods],
            "metric": MetricKind.SPATIAL_RMSE.value,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class StudyResult:
    """Dataset-averaged importance series of one parameter combination."""

    config: SimConfig
    series: List[ImportanceSeries]
    metadata: Dict[str, Any]


def analyze_dataset(dataset: SimDataset, grid: StudyGrid) -> List[ImportanceSeries]:
    """Fit an ESN on one dataset and compute its importance series.

    :return: series ordered by covariate, then method, then block size
    :rtype: List[ImportanceSeries]
    """
    index = dataset.dataset_index
    seed = dataset.config.seed
    standardized = [fields.standardize(f)[0] for f in (dataset.Z1, dataset.Z2, dataset.ZY)]
    bases = [basis.fit_pca(f, grid.retained) for f in standardized]
    inputs = np.vstack([bases[0].coefficients, bases[1].coefficients])
    outputs = bases[2].coefficients
    hyperparams = grid.hyperparams.replace(seed=derived_seed(seed, index, "esn"))
    model = reservoir.fit(
        hyperparams, inputs, outputs, input_blocks=(grid.retained, grid.retained)
    )
    metric = MetricSpec(MetricKind.SPATIAL_RMSE, basis=bases[2])
    importance_seed = derived_seed(seed, index, "importance")
    results: List[ImportanceSeries] = []
    for k, name in enumerate(CovariateNames):
        for method in grid.methods:
            for block_size in grid.block_sizes:
                query = ImportanceQuery(
                    variable_index=k,
                    block_size=block_size,
                    tau=hyperparams.tau,
                    method=method,
                    replications=grid.replications,
                    rng_seed=importance_seed,
                    variable_name=name,
                )
                results.append(
                    importance.compute_importance(
                        model, inputs, standardized[2].values, query, metric
                    )
                )
    Logger.debug(f"Analyzed dataset {index}: {len(results)} series")
    return results


def summarize_combination(
    config: SimConfig,
    per_dataset: Sequence[Sequence[ImportanceSeries]],
    grid: StudyGrid,
) -> StudyResult:
    """Average each series position over the datasets of one combination."""
    averaged = [
        importance.average_importance(column) for column in zip(*per_dataset)
    ]
    metadata = dict(grid.metadata(), n_datasets=len(per_dataset))
    return StudyResult(config, averaged, metadata)


def run_study(grid: StudyGrid) -> List[StudyResult]:
    """Run every combination of the grid sequentially."""
    results: List[StudyResult] = []
    combinations = grid.combinations()
    for number, config in enumerate(combinations, start=1):
        Logger.info(f"Study combination {number}/{len(combinations)}: {config}")
        per_dataset = [
            analyze_dataset(simulate_dataset(config, index), grid)
            for index in range(config.n_datasets)
        ]
        results.append(summarize_combination(config, per_dataset, grid))
    return results
