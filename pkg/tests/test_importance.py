import numpy as np
import pytest

from esn_importance_tool.core import basis, importance, reservoir
from esn_importance_tool.core.importance import (
    ImportanceQuery,
    ImportanceSeries,
    MetricKind,
    MetricSpec,
    Method,
)
from esn_importance_tool.core.reservoir import EsnHyperparams, Reservoir
from esn_importance_tool.errors import ValidationError

from conftest import make_field


def test_metric_examples():
    spec = MetricSpec()
    assert importance.evaluate_metric(spec, np.ones(4), np.ones(4)) == 0.0
    assert importance.evaluate_metric(spec, np.ones(4), np.zeros(4)) == 1.0


def test_spatial_metric_back_transforms_forecasts(rng):
    field = make_field(rng.standard_normal((6, 20)))
    decomposition = basis.fit_pca(field, 6)
    spec = MetricSpec(MetricKind.SPATIAL_RMSE, basis=decomposition)
    column = decomposition.coefficients[:, 4]
    assert importance.evaluate_metric(spec, field.values[:, 4], column) == pytest.approx(0.0, abs=1e-12)


def test_metric_spec_validation(rng):
    decomposition = basis.fit_pca(make_field(rng.standard_normal((3, 10))), 2)
    with pytest.raises(ValidationError):
        MetricSpec(MetricKind.SPATIAL_RMSE)
    with pytest.raises(ValidationError):
        MetricSpec(MetricKind.WEIGHTED_SPATIAL_RMSE, basis=decomposition, weights=np.ones(2))
    with pytest.raises(ValidationError):
        MetricSpec(MetricKind.WEIGHTED_SPATIAL_RMSE, basis=decomposition, weights=np.zeros(3))


def test_latitude_weights():
    weights = importance.latitude_weights([0.0, 90.0, -90.0, 60.0])
    np.testing.assert_allclose(weights, [1.0, 0.0, 0.0, np.sqrt(0.5)], atol=1e-15)
    with pytest.raises(ValidationError):
        importance.latitude_weights([91.0])


def test_weighted_error_examples():
    assert importance.weighted_error([3.0, -3.0], [0.0, 0.0], [1.0, 1.0]) == 3.0
    assert importance.weighted_error([1.0, 2.0], [1.0, 2.0], [1.0, 1.0]) == 0.0
    assert importance.weighted_error([2.0, 100.0], [0.0, 0.0], [1.0, 0.0]) == 2.0
    with pytest.raises(ValidationError):
        importance.weighted_error([1.0], [1.0, 2.0], [1.0, 1.0])
    with pytest.raises(ValidationError):
        importance.weighted_error([1.0, 2.0], [0.0, 0.0], [0.0, 0.0])


def test_weighted_spatial_mean():
    values = np.array([[1.0, 2.0], [3.0, 6.0]])
    np.testing.assert_allclose(importance.weighted_spatial_mean(values, [1.0, 3.0]), [2.5, 5.0])


def test_permute_block_only_touches_the_block(rng):
    inputs = rng.standard_normal((6, 10))
    adjusted = importance.permute_block(inputs, 1, [4, 5], rng, blocks=(2, 4))
    untouched = np.ones_like(inputs, dtype=bool)
    untouched[2:6, 3:5] = False
    np.testing.assert_array_equal(adjusted[untouched], inputs[untouched])
    for column in (3, 4):
        np.testing.assert_array_equal(np.sort(adjusted[2:6, column]), np.sort(inputs[2:6, column]))


def test_permute_block_identities(rng):
    inputs = rng.standard_normal((3, 8))
    np.testing.assert_array_equal(
        importance.permute_block(inputs, 0, [2, 3], rng, blocks=(1, 2)), inputs
    )
    inputs[1:3, 4] = 7.0
    np.testing.assert_array_equal(
        importance.permute_block(inputs, 1, [5], rng, blocks=(1, 2)), inputs
    )


def test_zero_block(rng):
    inputs = rng.standard_normal((4, 6))
    zeroed = importance.zero_block(inputs, 0, [2, 3], blocks=(2, 2))
    assert np.all(zeroed[0:2, 1:3] == 0.0)
    np.testing.assert_array_equal(zeroed[2:4], inputs[2:4])
    np.testing.assert_array_equal(importance.zero_block(zeroed, 0, [2, 3], blocks=(2, 2)), zeroed)
    with pytest.raises(ValidationError):
        importance.zero_block(inputs, 0, [7])


def test_block_times():
    assert importance.block_times(10, 1, 3) == [9, 8, 7]
    assert importance.block_times(5, 2, 1) == [3]


def test_zeroing_everything_with_no_memory_gives_zero_forecasts(rng, two_variable_data):
    inputs, outputs = two_variable_data
    model = reservoir.fit(EsnHyperparams(n_h=10, nu=0.0, a_u=0.5), inputs, outputs)
    zeroed = importance.zero_block(inputs, 0, range(1, inputs.shape[1] + 1))
    assert np.all(reservoir.forecast(model, zeroed) == 0.0)


def test_skipped_times(small_model, two_variable_data):
    inputs, outputs = two_variable_data
    series = importance.compute_importance(
        small_model, inputs, outputs, ImportanceQuery(1, block_size=3), MetricSpec()
    )
    # first forecast time 3, a block of 3 at lead 1 needs s >= 4
    assert series.skipped_times == (3,)
    assert series.forecast_times == tuple(range(4, 61))


def test_reduced_form_matches_general_computation(small_model, two_variable_data):
    inputs, outputs = two_variable_data
    for k in (0, 1):
        for block_size in (1, 2, 3):
            query = ImportanceQuery(k, block_size=block_size, method=Method.STZFI)
            general = importance.compute_importance(small_model, inputs, outputs, query, MetricSpec())
            reduced = importance.reduced_zeroed_importance(small_model, inputs, outputs, query)
            assert general.forecast_times == reduced.forecast_times
            np.testing.assert_allclose(general.values, reduced.values, atol=1e-12)


@pytest.mark.parametrize("method", [Method.STPFI, Method.STZFI])
def test_ignored_variable_has_zero_importance(two_variable_data, method):
    inputs, outputs = two_variable_data
    hyperparams = EsnHyperparams(n_h=15, a_u=0.5, pi_u=0.6, seed=12)
    sampled = reservoir.sample_reservoir(hyperparams, 6)
    U = sampled.U.copy()
    U[:, [0, 1, 2, 6, 7, 8]] = 0.0
    model = reservoir.fit(
        hyperparams, inputs, outputs, Reservoir(sampled.W, U, sampled.lambda_w), (3, 3)
    )
    series = importance.compute_importance(
        model, inputs, outputs, ImportanceQuery(0, block_size=2, method=method, replications=3), MetricSpec()
    )
    assert np.all(series.values == 0.0)


def test_single_coefficient_permutation_has_zero_importance(two_variable_data):
    inputs, outputs = two_variable_data
    model = reservoir.fit(EsnHyperparams(n_h=15, a_u=0.5, seed=2), inputs, outputs, input_blocks=(1, 5))
    series = importance.compute_importance(
        model, inputs, outputs, ImportanceQuery(0, method=Method.STPFI, replications=4), MetricSpec()
    )
    assert np.all(series.values == 0.0)


def test_driving_variable_is_more_important(small_model, two_variable_data):
    inputs, outputs = two_variable_data
    means = [
        importance.importance_summary(
            importance.compute_importance(
                small_model, inputs, outputs, ImportanceQuery(k, method=Method.STZFI), MetricSpec()
            )
        )["mean"]
        for k in (0, 1)
    ]
    assert means[1] > means[0]
    assert means[1] > 0


def test_permutation_importance_is_deterministic(small_model, two_variable_data):
    inputs, outputs = two_variable_data
    query = ImportanceQuery(1, block_size=2, method=Method.STPFI, replications=5, rng_seed=42)
    first = importance.compute_importance(small_model, inputs, outputs, query, MetricSpec())
    second = importance.compute_importance(small_model, inputs, outputs, query, MetricSpec())
    np.testing.assert_array_equal(first.values, second.values)


def test_spatial_metric_needs_field_rows(small_model, two_variable_data, rng):
    inputs, outputs = two_variable_data
    decomposition = basis.fit_pca(make_field(rng.standard_normal((5, 60))), 2)
    spec = MetricSpec(MetricKind.SPATIAL_RMSE, basis=decomposition)
    with pytest.raises(ValidationError):
        importance.compute_importance(small_model, inputs, outputs, ImportanceQuery(0), spec)
    observed = basis.reconstruct_values(decomposition, outputs)
    series = importance.compute_importance(small_model, inputs, observed, ImportanceQuery(0), spec)
    assert len(series.values) == 58


def test_query_lead_must_match_model(small_model, two_variable_data):
    inputs, outputs = two_variable_data
    with pytest.raises(ValidationError):
        importance.compute_importance(small_model, inputs, outputs, ImportanceQuery(0, tau=2), MetricSpec())


def _series(values, seed=0):
    return ImportanceSeries(
        (3, 4, 5), np.array(values, dtype=float), ImportanceQuery(0, rng_seed=seed), np.zeros(3)
    )


def test_average_importance_examples(rng):
    single = _series([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(importance.average_importance([single]).values, single.values)
    negated = _series([-1.0, -2.0, -3.0])
    np.testing.assert_array_equal(importance.average_importance([single, negated]).values, np.zeros(3))
    draws = rng.standard_normal((50, 3))
    averaged = importance.average_importance([_series(row, seed) for seed, row in enumerate(draws)])
    np.testing.assert_allclose(averaged.values, draws.sum(axis=0) / 50, atol=1e-12)


def test_average_importance_rejects_mismatched_axes():
    other = ImportanceSeries((4, 5, 6), np.zeros(3), ImportanceQuery(0), np.zeros(3))
    with pytest.raises(ValidationError):
        importance.average_importance([_series([1.0, 2.0, 3.0]), other])
    with pytest.raises(ValidationError):
        importance.average_importance([])


def test_importance_summary():
    summary = importance.importance_summary(_series([0.5, 2.0, 1.0]))
    assert summary == {"peak_time": 4, "peak": 2.0, "mean": pytest.approx(3.5 / 3)}


def test_spatial_rmse_and_weighted_error_on_one_bad_location():
    identity = basis.BasisDecomposition(
        np.eye(4), np.zeros((4, 1)), np.ones(4), np.zeros(4), np.zeros((4, 2))
    )
    observed = np.array([1.0, 0.0, 0.0, 0.0])
    rmse = MetricSpec(MetricKind.SPATIAL_RMSE, basis=identity)
    weighted = MetricSpec(MetricKind.WEIGHTED_SPATIAL_RMSE, basis=identity, weights=np.ones(4))
    assert importance.evaluate_metric(rmse, observed, np.zeros(4)) == pytest.approx(0.5)
    assert importance.evaluate_metric(weighted, observed, np.zeros(4)) == pytest.approx(0.25)


def test_weighted_spatial_mean_needs_a_positive_weight():
    with pytest.raises(ValidationError):
        importance.weighted_spatial_mean(np.ones((2, 3)), [0.0, 0.0])


@pytest.mark.parametrize("method", [Method.STPFI, Method.STZFI])
def test_only_the_block_before_each_forecast_is_adjusted(
    monkeypatch, small_model, two_variable_data, method
):
    inputs, outputs = two_variable_data
    batches = []

    def recording_forecast_batch(model, batch):
        batches.extend(batch)
        return reservoir.forecast_batch(model, batch)

    monkeypatch.setattr(importance, "forecast_batch", recording_forecast_batch)
    query = ImportanceQuery(1, block_size=3, method=method, replications=2)
    series = importance.compute_importance(small_model, inputs, outputs, query, MetricSpec())

    replications = 2 if method is Method.STPFI else 1
    jobs = [(s, r) for s in series.forecast_times for r in range(replications)]
    assert len(batches) == len(jobs)
    for (s, _), adjusted in zip(jobs, batches):
        rows, columns = np.nonzero(adjusted != inputs)
        assert set(rows) <= {3, 4, 5}
        assert set(columns + 1) <= {s - 1, s - 2, s - 3}
        if method is Method.STZFI:
            assert np.all(adjusted[3:6, s - 4 : s - 1] == 0.0)


@pytest.mark.parametrize("block_size", [1, 3])
def test_permutation_spread_shrinks_with_replications(small_model, two_variable_data, block_size):
    inputs, outputs = two_variable_data

    def spread(replications):
        estimates = np.array(
            [
                importance.compute_importance(
                    small_model,
                    inputs,
                    outputs,
                    ImportanceQuery(
                        1,
                        block_size=block_size,
                        method=Method.STPFI,
                        replications=replications,
                        rng_seed=seed,
                    ),
                    MetricSpec(),
                ).values
                for seed in range(8)
            ]
        )
        return estimates.std(axis=0).mean()

    assert spread(16) < 0.6 * spread(1)
