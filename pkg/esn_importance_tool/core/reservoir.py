#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Single layer echo state network with an embedding vector input.

## Model

    hidden stage:  h_t = tanh( (nu / lambda_w) W h_{t-1} + U x~_{t-tau} )
    output stage:  y_t = V h_t                      (linear)
                   y_t = V1 h_t + V2 h_t**2         (quadratic)

where x~_{t-tau} = [x_{t-tau}, x_{t-tau-tau*}, ..., x_{t-tau-m tau*}] is the
embedding vector and lambda_w is the spectral radius of W. W and U are sparse
random matrices, only V (or V1, V2) is estimated, by ridge regression.

## Time indexing

Times are 1-indexed. The first time with a complete embedding vector is
`1 + tau + m * tau_star`; hidden states, fitted values and forecasts are
produced from that time on, with the hidden state before it set to zero.

## Batches

The hidden-state recursion also runs on a batch of input histories shaped
(B, P, T). Every batch member goes through the same per-member matrix
products, so its result doesn't depend on the batch it's part of.
"""

import dataclasses
import logging as log
from dataclasses import dataclass
from typing import Any, Dict, Final, List, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from esn_importance_tool.errors import (
    DegenerateReservoirError,
    IllConditionedError,
    ValidationError,
)

Logger: Final[log.Logger] = log.getLogger(__name__)

DenseEigenLimit: Final[int] = 200
MaxResamples: Final[int] = 10
MaxConditionNumber: Final[float] = 1e12

Replacement = Tuple[int, slice, np.ndarray]


@dataclass(frozen=True)
class EsnHyperparams:
    """Tuning parameters of the ESN. Defaults are the simulation study settings.

    Attributes:
        - n_h: number of hidden units
        - a_w, a_u: half-widths of the uniform distributions of W and U entries
        - pi_w, pi_u: probabilities that an entry of W, U is nonzero
        - nu: memory scaling, the spectral radius of the effective W
        - lambda_r: ridge penalty
        - tau: forecast lead
        - tau_star: lag between embedding vector entries
        - m: embedding length (number of extra lags)
        - quadratic: add the squared hidden units to the output stage
        - seed: seed of the reservoir sampling stream
    """

    n_h: int = 50
    a_w: float = 0.1
    a_u: float = 0.1
    pi_w: float = 0.1
    pi_u: float = 0.1
    nu: float = 0.35
    lambda_r: float = 0.1
    tau: int = 1
    tau_star: int = 1
    m: int = 1
    quadratic: bool = False
    seed: int = 0

    def __post_init__(self):
        checks = [
            (self.n_h >= 1, "n_h must be at least 1"),
            (self.a_w >= 0 and self.a_u >= 0, "a_w and a_u must be nonnegative"),
            (0 < self.pi_w <= 1 and 0 < self.pi_u <= 1, "pi_w and pi_u must be in (0, 1]"),
            (0 <= self.nu <= 1, "nu must be in [0, 1]"),
            (self.lambda_r > 0, "lambda_r must be positive"),
            (self.tau >= 1, "tau must be at least 1"),
            (self.tau_star >= 1, "tau_star must be at least 1"),
            (self.m >= 0, "m must be nonnegative"),
            (self.seed >= 0, "seed must be nonnegative"),
        ]
        for passed, message in checks:
            if not passed:
                raise ValidationError(message)

    @property
    def first_forecast_time(self) -> int:
        return 1 + self.tau + self.m * self.tau_star

    def replace(self, **changes) -> "EsnHyperparams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class Reservoir:
    """Sampled reservoir matrices.

    Attributes:
        - W: n_h x n_h recurrent matrix
        - U: n_h x P(m + 1) input matrix
        - lambda_w: spectral radius of W
    """

    W: np.ndarray
    U: np.ndarray
    lambda_w: float

    def scaled_recurrent(self, nu: float) -> np.ndarray:
        """The effective recurrent matrix (nu / lambda_w) W."""
        if self.lambda_w <= 0:
            raise DegenerateReservoirError("W has a zero spectral radius")
        return (nu / self.lambda_w) * self.W


@dataclass(frozen=True)
class EsnModel:
    """A fitted ESN.

    Attributes:
        - hyperparams: tuning parameters the model was fitted with
        - reservoir: the sampled W and U
        - output_coefficients: Q x n_h matrix V, or Q x 2 n_h matrix [V1, V2]
          for the quadratic output stage
        - input_dim: P
        - output_dim: Q
        - input_blocks: P_k of each input variable, in row order
        - hidden_states: n_h x T' hidden states over the training times
        - residual_variance: mean squared training residual
    """

    hyperparams: EsnHyperparams
    reservoir: Reservoir
    output_coefficients: np.ndarray
    input_dim: int
    output_dim: int
    input_blocks: Tuple[int, ...]
    hidden_states: np.ndarray
    residual_variance: float

    @property
    def first_forecast_time(self) -> int:
        return self.hyperparams.first_forecast_time

    @property
    def V1(self) -> np.ndarray:
        return self.output_coefficients[:, : self.hyperparams.n_h]

    @property
    def V2(self) -> np.ndarray | None:
        if not self.hyperparams.quadratic:
            return None
        return self.output_coefficients[:, self.hyperparams.n_h :]

    def variable_slice(self, k: int) -> slice:
        """Rows of the input matrix that hold variable k's coefficients."""
        return variable_slice(self.input_blocks, k)


def variable_slice(blocks: Sequence[int], k: int) -> slice:
    """Rows holding variable k when P_k rows are stacked in `blocks` order."""
    if not 0 <= k < len(blocks):
        raise ValidationError(
            f"variable index {k} out of range for {len(blocks)} variables"
        )
    start = int(sum(blocks[:k]))
    return slice(start, start + int(blocks[k]))


def spectral_radius(matrix: np.ndarray) -> float:
    """Largest absolute eigenvalue of a square matrix.

    Matrices up to 200 x 200 use a dense eigendecomposition, larger ones
    ARPACK's Arnoldi iteration on a sparse copy.

    :param matrix: square real matrix
    :type matrix: np.ndarray
    :return: the spectral radius
    :rtype: float
    :raises ValidationError: if the matrix isn't square
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] == 0:
        raise ValidationError(f"spectral radius needs a square matrix, got {matrix.shape}")
    if matrix.shape[0] <= DenseEigenLimit:
        return float(np.max(np.abs(scipy.linalg.eigvals(matrix))))
    try:
        eigenvalues = scipy.sparse.linalg.eigs(
            scipy.sparse.csr_matrix(matrix),
            k=1,
            which="LM",
            tol=1e-10,
            maxiter=10_000,
            return_eigenvectors=False,
        )
    except scipy.sparse.linalg.ArpackNoConvergence:
        Logger.debug("ARPACK didn't converge, falling back to dense eigenvalues")
        return float(np.max(np.abs(scipy.linalg.eigvals(matrix))))
    return float(np.max(np.abs(eigenvalues)))


def _sparse_uniform(
    rng: np.random.Generator, shape: Tuple[int, int], half_width: float, probability: float
) -> np.ndarray:
    included = rng.random(shape) < probability
    draws = rng.uniform(-half_width, half_width, shape)
    return np.where(included, draws, 0.0)


def sample_reservoir(hyperparams: EsnHyperparams, input_dim: int) -> Reservoir:
    """Sample W and U, each entry zero with probability 1 - pi, else uniform.

    The draws come from a stream seeded by `hyperparams.seed`, so the same
    hyperparameters always give the same reservoir.

    :param hyperparams: ESN tuning parameters
    :type hyperparams: EsnHyperparams
    :param input_dim: P, the number of input coefficients per time
    :type input_dim: int
    :return: the sampled reservoir
    :rtype: Reservoir
    :raises DegenerateReservoirError: if W has a zero spectral radius after
        10 resamples
    """
    if input_dim < 1:
        raise ValidationError("input_dim must be at least 1")
    rng = np.random.default_rng(np.random.SeedSequence(hyperparams.seed))
    n_h = hyperparams.n_h
    embedding_dim = input_dim * (hyperparams.m + 1)
    for attempt in range(MaxResamples + 1):
        W = _sparse_uniform(rng, (n_h, n_h), hyperparams.a_w, hyperparams.pi_w)
        U = _sparse_uniform(rng, (n_h, embedding_dim), hyperparams.a_u, hyperparams.pi_u)
        lambda_w = spectral_radius(W)
        if lambda_w > 0:
            Logger.debug(
                f"Sampled reservoir on attempt {attempt + 1}: lambda_w={lambda_w:.6g}, "
                f"W density={np.count_nonzero(W) / W.size:.3f}"
            )
            return Reservoir(W, U, lambda_w)
        Logger.debug(f"Resampling reservoir, attempt {attempt + 1} gave lambda_w=0")
    raise DegenerateReservoirError(
        f"degenerate reservoir: W had a zero spectral radius in "
        f"{MaxResamples + 1} draws"
    )


def build_embedding(
    inputs: np.ndarray, t: int, tau: int, tau_star: int, m: int
) -> np.ndarray:
    """Embedding vector [x_{t-tau}, x_{t-tau-tau*}, ..., x_{t-tau-m tau*}].

    :param inputs: P x T input matrix
    :type inputs: np.ndarray
    :param t: 1-indexed time
    :type t: int
    :return: vector of length P(m + 1)
    :rtype: np.ndarray
    :raises ValidationError: if t doesn't have enough history
    """
    earliest = 1 + tau + m * tau_star
    if t < earliest or t - tau > inputs.shape[1]:
        raise ValidationError(
            f"time {t} has no complete embedding, earliest feasible time is {earliest}"
        )
    return np.concatenate([inputs[:, t - tau - j * tau_star - 1] for j in range(m + 1)])


def embedding_matrix(inputs: np.ndarray, hyperparams: EsnHyperparams) -> np.ndarray:
    """Embedding vectors of all feasible times, shaped (..., P(m + 1), T')."""
    n_times = inputs.shape[-1]
    first = hyperparams.first_forecast_time
    if n_times < first:
        raise ValidationError(
            f"{n_times} times don't cover the first feasible time {first}"
        )
    span = n_times - first + 1
    lags = []
    for j in range(hyperparams.m + 1):
        start = first - hyperparams.tau - j * hyperparams.tau_star - 1
        lags.append(inputs[..., start : start + span])
    return np.concatenate(lags, axis=-2)


def _run_hidden_batch(
    reservoir: Reservoir, hyperparams: EsnHyperparams, inputs: np.ndarray
) -> np.ndarray:
    embedded = embedding_matrix(inputs, hyperparams)
    if embedded.shape[-2] != reservoir.U.shape[1]:
        raise ValidationError(
            f"U expects embedding vectors of length {reservoir.U.shape[1]}, "
            f"inputs give {embedded.shape[-2]}"
        )
    drive = np.matmul(reservoir.U, embedded)
    recurrent = reservoir.scaled_recurrent(hyperparams.nu)
    states = np.empty(drive.shape)
    state = np.zeros(drive.shape[:-1])
    for column in range(drive.shape[-1]):
        recalled = np.matmul(recurrent, state[..., None])[..., 0]
        state = np.tanh(recalled + drive[..., column])
        states[..., column] = state
    return states


def run_hidden_states(
    reservoir: Reservoir, hyperparams: EsnHyperparams, inputs: np.ndarray
) -> np.ndarray:
    """Hidden states h_t for every feasible time.

    :param reservoir: sampled reservoir
    :type reservoir: Reservoir
    :param hyperparams: ESN tuning parameters
    :type hyperparams: EsnHyperparams
    :param inputs: P x T input matrix
    :type inputs: np.ndarray
    :return: n_h x T' matrix, column j holds h_t for t = first_forecast_time + j
    :rtype: np.ndarray
    """
    inputs = np.asarray(inputs, dtype=float)
    return _run_hidden_batch(reservoir, hyperparams, inputs[None])[0]


def _regressors(states: np.ndarray, quadratic: bool) -> np.ndarray:
    if quadratic:
        return np.concatenate([states, states**2], axis=-2)
    return states


def fit(
    hyperparams: EsnHyperparams,
    inputs: np.ndarray,
    outputs: np.ndarray,
    reservoir: Reservoir | None = None,
    input_blocks: Sequence[int] | None = None,
) -> EsnModel:
    """Fit the output stage by ridge regression over all feasible times.

    :param hyperparams: ESN tuning parameters
    :type hyperparams: EsnHyperparams
    :param inputs: P x T input coefficients
    :type inputs: np.ndarray
    :param outputs: Q x T output coefficients
    :type outputs: np.ndarray
    :param reservoir: reservoir to use instead of sampling one
    :type reservoir: Reservoir | None
    :param input_blocks: P_k of each input variable, a single block by default
    :type input_blocks: Sequence[int] | None
    :return: the fitted model
    :rtype: EsnModel
    :raises IllConditionedError: if the normal equations are near singular
    """
    inputs = np.asarray(inputs, dtype=float)
    outputs = np.asarray(outputs, dtype=float)
    if inputs.ndim != 2 or outputs.ndim != 2 or inputs.shape[1] != outputs.shape[1]:
        raise ValidationError(
            f"inputs {inputs.shape} and outputs {outputs.shape} must be matrices "
            f"with the same number of times"
        )
    input_dim, n_times = inputs.shape
    output_dim = outputs.shape[0]
    first = hyperparams.first_forecast_time
    if n_times < first + output_dim:
        raise ValidationError(
            f"{n_times} times leave too few usable columns, need at least "
            f"{first + output_dim}"
        )
    blocks = tuple(int(b) for b in (input_blocks or (input_dim,)))
    if sum(blocks) != input_dim or min(blocks) < 1:
        raise ValidationError(f"input blocks {blocks} don't partition {input_dim} rows")
    if reservoir is None:
        reservoir = sample_reservoir(hyperparams, input_dim)

    states = _run_hidden_batch(reservoir, hyperparams, inputs[None])
    regressors = _regressors(states, hyperparams.quadratic)
    design = regressors[0]
    targets = outputs[:, first - 1 :]
    gram = design @ design.T + hyperparams.lambda_r * np.eye(design.shape[0])
    condition = np.linalg.cond(gram)
    Logger.debug(f"Ridge normal equations condition number: {condition:.3g}")
    if not np.isfinite(condition) or condition > MaxConditionNumber:
        raise IllConditionedError(
            f"ridge normal equations have condition number {condition:.3g}, "
            f"increase lambda_r"
        )
    factor = scipy.linalg.cho_factor(gram)
    coefficients = scipy.linalg.cho_solve(factor, design @ targets.T).T
    fitted = np.matmul(coefficients, regressors)[0]
    residual_variance = float(np.mean((targets - fitted) ** 2))
    Logger.debug(f"Fitted ESN output stage, residual variance {residual_variance:.6g}")
    return EsnModel(
        hyperparams=hyperparams,
        reservoir=reservoir,
        output_coefficients=coefficients,
        input_dim=input_dim,
        output_dim=output_dim,
        input_blocks=blocks,
        hidden_states=states[0],
        residual_variance=residual_variance,
    )


def forecast_batch(model: EsnModel, inputs: np.ndarray) -> np.ndarray:
    """Forecasts for a batch of input histories shaped (B, P, T).

    :return: (B, Q, T') forecasts over the feasible times
    :rtype: np.ndarray
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 3 or inputs.shape[1] != model.input_dim:
        raise ValidationError(
            f"expected inputs shaped (B, {model.input_dim}, T), got {inputs.shape}"
        )
    states = _run_hidden_batch(model.reservoir, model.hyperparams, inputs)
    regressors = _regressors(states, model.hyperparams.quadratic)
    return np.matmul(model.output_coefficients, regressors)


def forecast(model: EsnModel, inputs: np.ndarray) -> np.ndarray:
    """Point forecasts y^_t for every feasible time.

    :param model: fitted model
    :type model: EsnModel
    :param inputs: P x T input history
    :type inputs: np.ndarray
    :return: Q x T' matrix, column j is the forecast of time first_forecast_time + j
    :rtype: np.ndarray
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2:
        raise ValidationError(f"expected a P x T input matrix, got {inputs.shape}")
    return forecast_batch(model, inputs[None])[0]


def apply_replacements(
    inputs: np.ndarray, replacements: Sequence[Replacement]
) -> np.ndarray:
    """Copy of `inputs` with (time, rows, values) slices overwritten."""
    adjusted = np.array(inputs, dtype=float, copy=True)
    input_dim, n_times = adjusted.shape
    for time, rows, values in replacements:
        if not 1 <= time <= n_times:
            raise ValidationError(f"replacement time {time} outside 1..{n_times}")
        start, stop, step = rows.indices(input_dim)
        if step != 1 or rows.start is None or rows.stop is None or not (
            0 <= rows.start < rows.stop <= input_dim
        ):
            raise ValidationError(f"replacement rows {rows} outside 0..{input_dim}")
        values = np.asarray(values, dtype=float)
        if values.shape != (stop - start,):
            raise ValidationError(
                f"replacement for rows {rows} needs {stop - start} values, "
                f"got {values.shape}"
            )
        adjusted[start:stop, time - 1] = values
    return adjusted


def forecast_with_adjusted_inputs(
    model: EsnModel, inputs: np.ndarray, replacements: Sequence[Replacement]
) -> np.ndarray:
    """Forecasts after overwriting slices of the input history.

    The hidden-state recursion is rerun from its initial state, so an
    adjustment at time t reaches every later hidden state through W.

    :param model: fitted model
    :type model: EsnModel
    :param inputs: P x T input history
    :type inputs: np.ndarray
    :param replacements: (1-indexed time, row slice, values) triples
    :type replacements: Sequence[Tuple[int, slice, np.ndarray]]
    :return: Q x T' forecasts
    :rtype: np.ndarray
    """
    return forecast(model, apply_replacements(inputs, replacements))


def model_to_document(model: EsnModel) -> Dict[str, Any]:
    """Convert a model into a JSON-serializable dictionary.

    Python floats keep their shortest round-trip repr in JSON, so a document
    written with `json` reloads into a bit-identical model.
    """
    W = model.reservoir.W
    U = model.reservoir.U
    return {
        "format": "esn-model",
        "version": 1,
        "hyperparams": model.hyperparams.to_dict(),
        "input_dim": model.input_dim,
        "output_dim": model.output_dim,
        "input_blocks": list(model.input_blocks),
        "lambda_w": model.reservoir.lambda_w,
        "W": W.tolist(),
        "W_mask": (W != 0).astype(int).tolist(),
        "U": U.tolist(),
        "U_mask": (U != 0).astype(int).tolist(),
        "output_coefficients": model.output_coefficients.tolist(),
        "hidden_states": model.hidden_states.tolist(),
        "residual_variance": model.residual_variance,
    }


def model_from_document(document: Dict[str, Any]) -> EsnModel:
    """Rebuild a model written by `model_to_document`."""
    if document.get("format") != "esn-model":
        raise ValidationError("document is not an ESN model")
    W = np.array(document["W"], dtype=float) * np.array(document["W_mask"], dtype=bool)
    U = np.array(document["U"], dtype=float) * np.array(document["U_mask"], dtype=bool)
    n_h = document["hyperparams"]["n_h"]
    hidden_states: List = document["hidden_states"]
    return EsnModel(
        hyperparams=EsnHyperparams(**document["hyperparams"]),
        reservoir=Reservoir(W, U, float(document["lambda_w"])),
        output_coefficients=np.array(document["output_coefficients"], dtype=float),
        input_dim=int(document["input_dim"]),
        output_dim=int(document["output_dim"]),
        input_blocks=tuple(document["input_blocks"]),
        hidden_states=np.array(hidden_states, dtype=float).reshape(n_h, -1),
        residual_variance=float(document["residual_variance"]),
    )
