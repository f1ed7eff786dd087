import json

import numpy as np
import pytest

from esn_importance_tool.core import reservoir
from esn_importance_tool.core.reservoir import EsnHyperparams, Reservoir
from esn_importance_tool.errors import (
    DegenerateReservoirError,
    IllConditionedError,
    ValidationError,
)


def test_hyperparam_defaults_and_first_forecast_time():
    hyperparams = EsnHyperparams()
    assert (hyperparams.n_h, hyperparams.nu, hyperparams.lambda_r) == (50, 0.35, 0.1)
    assert hyperparams.first_forecast_time == 3
    assert EsnHyperparams(m=5).first_forecast_time == 7


@pytest.mark.parametrize(
    "changes", [{"n_h": 0}, {"pi_w": 0.0}, {"pi_u": 1.5}, {"nu": 1.2}, {"lambda_r": 0.0}, {"tau": 0}, {"m": -1}]
)
def test_hyperparams_out_of_range(changes):
    with pytest.raises(ValidationError):
        EsnHyperparams(**changes)


def test_spectral_radius_examples():
    assert reservoir.spectral_radius(np.diag([0.5, -0.9])) == pytest.approx(0.9, rel=1e-12)
    assert reservoir.spectral_radius(np.array([[0.0, 1.0], [0.0, 0.0]])) == 0.0
    with pytest.raises(ValidationError):
        reservoir.spectral_radius(np.zeros((2, 3)))


def test_spectral_radius_matches_dense_solver(rng):
    matrix = np.where(rng.random((50, 50)) < 0.1, rng.uniform(-1, 1, (50, 50)), 0.0)
    expected = np.max(np.abs(np.linalg.eigvals(matrix)))
    assert reservoir.spectral_radius(matrix) == pytest.approx(expected, rel=1e-6)


def test_spectral_radius_of_large_matrix(rng):
    noise = np.where(rng.random((300, 300)) < 0.02, rng.uniform(-0.01, 0.01, (300, 300)), 0.0)
    matrix = np.diag(np.linspace(0.1, 2.0, 300)) + noise
    expected = np.max(np.abs(np.linalg.eigvals(matrix)))
    assert reservoir.spectral_radius(matrix) == pytest.approx(expected, rel=1e-6)


def test_sampled_reservoir_sparsity_and_scaling():
    hyperparams = EsnHyperparams(seed=11)
    sampled = reservoir.sample_reservoir(hyperparams, input_dim=10)
    assert sampled.W.shape == (50, 50)
    assert sampled.U.shape == (50, 20)
    assert 0.05 <= np.count_nonzero(sampled.W) / sampled.W.size <= 0.15
    assert np.all(np.abs(sampled.W) <= 0.1)
    scaled = sampled.scaled_recurrent(hyperparams.nu)
    assert reservoir.spectral_radius(scaled) == pytest.approx(0.35, rel=1e-8)


@pytest.mark.parametrize("pi_w", [0.05, 0.1, 0.5])
def test_sampled_spectral_radius_matches_dense_solver(pi_w):
    for seed in range(100):
        hyperparams = EsnHyperparams(pi_w=pi_w, seed=seed)
        sampled = reservoir.sample_reservoir(hyperparams, input_dim=4)
        expected = np.max(np.abs(np.linalg.eigvals(sampled.W)))
        assert sampled.lambda_w == pytest.approx(expected, rel=1e-9)
        scaled = sampled.scaled_recurrent(hyperparams.nu)
        assert np.max(np.abs(np.linalg.eigvals(scaled))) == pytest.approx(0.35, rel=1e-6)


def test_sampling_is_deterministic():
    hyperparams = EsnHyperparams(n_h=30, seed=5)
    first = reservoir.sample_reservoir(hyperparams, 4)
    second = reservoir.sample_reservoir(hyperparams, 4)
    np.testing.assert_array_equal(first.W, second.W)
    np.testing.assert_array_equal(first.U, second.U)


def test_degenerate_reservoir_after_resampling():
    # a 1 x 1 W with pi_w tiny is zero on every draw
    hyperparams = EsnHyperparams(n_h=1, pi_w=1e-12)
    with pytest.raises(DegenerateReservoirError, match="degenerate reservoir"):
        reservoir.sample_reservoir(hyperparams, 2)


def test_build_embedding_examples():
    inputs = np.arange(1, 21, dtype=float).reshape(2, 10)
    np.testing.assert_array_equal(reservoir.build_embedding(inputs, 3, 1, 1, 0), inputs[:, 1])
    np.testing.assert_array_equal(
        reservoir.build_embedding(inputs, 3, 1, 1, 1),
        np.concatenate([inputs[:, 1], inputs[:, 0]]),
    )
    with pytest.raises(ValidationError, match="earliest feasible time is 7"):
        reservoir.build_embedding(inputs, 6, 1, 1, 5)


def test_embedding_matrix_matches_build_embedding(rng):
    inputs = rng.standard_normal((3, 15))
    hyperparams = EsnHyperparams(tau=2, tau_star=2, m=2)
    matrix = reservoir.embedding_matrix(inputs, hyperparams)
    first = hyperparams.first_forecast_time
    for j, t in enumerate(range(first, 16)):
        np.testing.assert_array_equal(
            matrix[:, j], reservoir.build_embedding(inputs, t, 2, 2, 2)
        )


def _naive_states(model_reservoir, hyperparams, inputs):
    recurrent = model_reservoir.scaled_recurrent(hyperparams.nu)
    state = np.zeros(hyperparams.n_h)
    states = []
    for t in range(hyperparams.first_forecast_time, inputs.shape[1] + 1):
        embedding = reservoir.build_embedding(
            inputs, t, hyperparams.tau, hyperparams.tau_star, hyperparams.m
        )
        state = np.tanh(recurrent @ state + model_reservoir.U @ embedding)
        states.append(state)
    return np.column_stack(states)


def test_hidden_states_match_naive_loop(rng):
    hyperparams = EsnHyperparams(n_h=15, a_u=0.5, pi_u=0.5, m=2, seed=2)
    inputs = rng.standard_normal((4, 25))
    sampled = reservoir.sample_reservoir(hyperparams, 4)
    states = reservoir.run_hidden_states(sampled, hyperparams, inputs)
    np.testing.assert_allclose(states, _naive_states(sampled, hyperparams, inputs), atol=1e-12)
    assert np.all(np.abs(states) < 1)


def test_zero_input_weights_give_zero_states(rng):
    hyperparams = EsnHyperparams(n_h=10)
    sampled = reservoir.sample_reservoir(hyperparams, 3)
    silent = Reservoir(sampled.W, np.zeros_like(sampled.U), sampled.lambda_w)
    states = reservoir.run_hidden_states(silent, hyperparams, rng.standard_normal((3, 12)))
    assert np.all(states == 0.0)


def test_zero_memory_is_memoryless(rng):
    hyperparams = EsnHyperparams(n_h=10, nu=0.0, a_u=0.5, pi_u=0.5)
    inputs = rng.standard_normal((3, 12))
    sampled = reservoir.sample_reservoir(hyperparams, 3)
    states = reservoir.run_hidden_states(sampled, hyperparams, inputs)
    expected = np.tanh(sampled.U @ reservoir.embedding_matrix(inputs, hyperparams))
    np.testing.assert_allclose(states, expected, atol=1e-15)


def _gradient_descent_ridge(design, targets, penalty, iterations=20000):
    step = 1.0 / (2 * (np.linalg.eigvalsh(design @ design.T).max() + penalty))
    coefficients = np.zeros((targets.shape[0], design.shape[0]))
    for _ in range(iterations):
        gradient = -2 * (targets - coefficients @ design) @ design.T + 2 * penalty * coefficients
        coefficients -= step * gradient
    return coefficients


@pytest.mark.parametrize("seed", range(10))
def test_ridge_matches_iterative_minimizer(seed):
    rng = np.random.default_rng(seed)
    hyperparams = EsnHyperparams(n_h=5, pi_w=0.8, pi_u=0.8, a_u=0.5, seed=seed)
    inputs = rng.standard_normal((4, 30))
    outputs = rng.standard_normal((3, 30))
    model = reservoir.fit(hyperparams, inputs, outputs)
    targets = outputs[:, hyperparams.first_forecast_time - 1 :]
    expected = _gradient_descent_ridge(model.hidden_states, targets, hyperparams.lambda_r)
    np.testing.assert_allclose(model.output_coefficients, expected, atol=1e-6)


def test_ridge_normal_equation_residual(two_variable_data):
    inputs, outputs = two_variable_data
    model = reservoir.fit(EsnHyperparams(n_h=20, seed=1), inputs, outputs)
    H = model.hidden_states
    Y = outputs[:, model.first_forecast_time - 1 :]
    residual = (H @ H.T + 0.1 * np.eye(20)) @ model.output_coefficients.T - H @ Y.T
    assert np.linalg.norm(residual) < 1e-8 * np.linalg.norm(H @ Y.T)


def test_zero_outputs_give_zero_coefficients(rng):
    model = reservoir.fit(EsnHyperparams(n_h=10), rng.standard_normal((3, 20)), np.zeros((2, 20)))
    assert np.all(model.output_coefficients == 0.0)
    assert model.residual_variance == 0.0


def test_shrinkage_is_monotone(two_variable_data):
    inputs, outputs = two_variable_data
    norms = [
        np.linalg.norm(
            reservoir.fit(EsnHyperparams(n_h=20, lambda_r=penalty), inputs, outputs).output_coefficients
        )
        for penalty in (0.01, 0.1, 1.0, 10.0, 1e12)
    ]
    assert all(a >= b for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 1e-6 * norms[0]


def test_ill_conditioned_fit(rng):
    # 30 hidden units but only 18 usable times: H H' is singular
    hyperparams = EsnHyperparams(n_h=30, lambda_r=1e-14, a_u=0.5, pi_u=1.0)
    inputs = rng.standard_normal((2, 20))
    with pytest.raises(IllConditionedError, match="lambda_r"):
        reservoir.fit(hyperparams, inputs, rng.standard_normal((1, 20)))


def test_fit_needs_enough_times(rng):
    with pytest.raises(ValidationError):
        reservoir.fit(EsnHyperparams(n_h=5), rng.standard_normal((2, 4)), rng.standard_normal((3, 4)))


def test_forecast_reproduces_fitted_values(small_model, two_variable_data):
    inputs, outputs = two_variable_data
    predicted = reservoir.forecast(small_model, inputs)
    residuals = outputs[:, small_model.first_forecast_time - 1 :] - predicted
    assert np.mean(residuals**2) == small_model.residual_variance


def test_quadratic_with_zero_second_stage_matches_linear(two_variable_data):
    inputs, outputs = two_variable_data
    linear = reservoir.fit(EsnHyperparams(n_h=12, seed=4), inputs, outputs)
    quadratic = reservoir.fit(EsnHyperparams(n_h=12, seed=4, quadratic=True), inputs, outputs)
    assert quadratic.V2 is not None and linear.V2 is None
    coefficients = np.hstack([linear.V1, np.zeros_like(linear.V1)])
    degenerate = reservoir.EsnModel(
        **{**quadratic.__dict__, "output_coefficients": coefficients}
    )
    np.testing.assert_allclose(
        reservoir.forecast(degenerate, inputs), reservoir.forecast(linear, inputs), atol=1e-14
    )


def test_adjusted_inputs_without_changes_match_forecast(small_model, two_variable_data):
    inputs, _ = two_variable_data
    baseline = reservoir.forecast(small_model, inputs)
    np.testing.assert_array_equal(
        reservoir.forecast_with_adjusted_inputs(small_model, inputs, []), baseline
    )
    own_values = [(10, slice(0, 3), inputs[0:3, 9])]
    np.testing.assert_array_equal(
        reservoir.forecast_with_adjusted_inputs(small_model, inputs, own_values), baseline
    )


def test_adjustment_propagates_through_memory(small_model, two_variable_data):
    inputs, _ = two_variable_data
    baseline = reservoir.forecast(small_model, inputs)
    adjusted = reservoir.forecast_with_adjusted_inputs(
        small_model, inputs, [(10, slice(3, 6), np.zeros(3))]
    )
    first = small_model.first_forecast_time
    # time 10 enters the embedding of t = 11 and t = 12 with m = 1
    np.testing.assert_array_equal(adjusted[:, : 11 - first], baseline[:, : 11 - first])
    assert not np.allclose(adjusted[:, 13 - first :], baseline[:, 13 - first :])


def test_adjusting_a_disconnected_variable_changes_nothing(two_variable_data):
    inputs, outputs = two_variable_data
    hyperparams = EsnHyperparams(n_h=10, a_u=0.5, pi_u=0.6, seed=8)
    sampled = reservoir.sample_reservoir(hyperparams, 6)
    U = sampled.U.copy()
    # variable 0 occupies rows 0..2 of each embedded lag
    U[:, [0, 1, 2, 6, 7, 8]] = 0.0
    model = reservoir.fit(
        hyperparams, inputs, outputs, Reservoir(sampled.W, U, sampled.lambda_w), (3, 3)
    )
    adjusted = reservoir.forecast_with_adjusted_inputs(
        model, inputs, [(t, slice(0, 3), np.zeros(3)) for t in range(1, 61)]
    )
    np.testing.assert_array_equal(adjusted, reservoir.forecast(model, inputs))


@pytest.mark.parametrize(
    "replacement",
    [(0, slice(0, 3), np.zeros(3)), (61, slice(0, 3), np.zeros(3)), (5, slice(4, 8), np.zeros(4)), (5, slice(0, 3), np.zeros(2))],
)
def test_out_of_range_replacements(small_model, two_variable_data, replacement):
    inputs, _ = two_variable_data
    with pytest.raises(ValidationError):
        reservoir.forecast_with_adjusted_inputs(small_model, inputs, [replacement])


def test_fit_is_deterministic(two_variable_data):
    inputs, outputs = two_variable_data
    first = reservoir.fit(EsnHyperparams(n_h=20, seed=9), inputs, outputs)
    second = reservoir.fit(EsnHyperparams(n_h=20, seed=9), inputs, outputs)
    np.testing.assert_array_equal(first.output_coefficients, second.output_coefficients)


def test_model_document_round_trip_is_bit_exact(small_model, two_variable_data):
    inputs, _ = two_variable_data
    document = json.loads(json.dumps(reservoir.model_to_document(small_model)))
    restored = reservoir.model_from_document(document)
    np.testing.assert_array_equal(restored.reservoir.W, small_model.reservoir.W)
    np.testing.assert_array_equal(restored.output_coefficients, small_model.output_coefficients)
    assert restored.input_blocks == small_model.input_blocks
    np.testing.assert_array_equal(
        reservoir.forecast(restored, inputs), reservoir.forecast(small_model, inputs)
    )
