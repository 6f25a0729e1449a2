"""Tests for edmd module."""

import numpy as np
import pytest

from adaptive_kmpc.buffer import TrajectoryBuffer
from adaptive_kmpc.dictionary import make_identity_dictionary, make_robot_dictionary
from adaptive_kmpc.edmd import (
    KoopmanModel,
    fit,
    fit_from_buffer,
    multi_step_rmse,
    predict,
    pseudo_inverse,
)
from adaptive_kmpc.errors import IdentificationError, InputError


def _stable_system(rng, p, m):
    a = rng.normal(size=(p, p))
    a *= 0.9 / max(abs(np.linalg.eigvals(a)))
    return a, rng.normal(size=(p, m))


def _simulate(a, b, x0, controls):
    states = [x0]
    for u in controls.T:
        states.append(a @ states[-1] + b @ u)
    return np.column_stack(states)


def test_fit_recovers_lifted_linear_system(rng):
    """Test exact identification from 100 noiseless random samples."""
    a, b = _stable_system(rng, 6, 1)
    x = rng.normal(size=(6, 100))
    u = rng.normal(size=(1, 100))
    xbar = a @ x + b @ u

    model = fit(x, xbar, u)

    k_fit = np.hstack([model.A, model.B])
    assert np.linalg.norm(k_fit - np.hstack([a, b])) < 1e-8


def test_fit_selector_and_dimensions(rng):
    """Test the reconstruction matrix and reported dimensions."""
    x = rng.normal(size=(6, 20))
    model = fit(x, x, rng.normal(size=(1, 20)), n=2, dt=0.01)

    assert (model.p, model.n, model.m) == (6, 2, 1)
    np.testing.assert_array_equal(model.C, np.hstack([np.eye(2), np.zeros((2, 4))]))
    assert model.dt == 0.01


def test_fit_rank_deficient_gives_minimum_norm(rng):
    """Test that duplicated regressors give the minimum-norm solution."""
    base = rng.normal(size=(1, 30))
    x = np.vstack([base, base])
    u = rng.normal(size=(1, 30))
    xbar = 2.0 * x + u

    model = fit(x, xbar, u)

    # Both copies of the state share the weight equally.
    np.testing.assert_allclose(model.A, np.full((2, 2), 1.0), atol=1e-10)
    np.testing.assert_allclose(model.B, np.ones((2, 1)), atol=1e-10)


def test_fit_with_ridge_shrinks_gain(rng):
    """Test that a ridge weight reduces the fitted gain."""
    x = rng.normal(size=(2, 40))
    u = rng.normal(size=(1, 40))
    xbar = 1.5 * x + u

    plain = fit(x, xbar, u)
    ridged = fit(x, xbar, u, ridge=10.0)

    assert np.linalg.norm(ridged.A) < np.linalg.norm(plain.A)


def test_fit_rejects_non_finite(rng):
    """Test that NaN data is rejected."""
    x = rng.normal(size=(2, 5))
    x[0, 1] = np.nan

    with pytest.raises(InputError):
        fit(x, x, np.zeros((1, 5)))


def test_fit_rejects_mismatched_columns(rng):
    """Test that successor and state matrices must align."""
    with pytest.raises(InputError):
        fit(rng.normal(size=(2, 5)), rng.normal(size=(2, 4)), np.zeros((1, 5)))


def test_pseudo_inverse_cutoff():
    """Test that tiny singular values are discarded."""
    matrix = np.diag([1.0, 1e-14])

    np.testing.assert_allclose(pseudo_inverse(matrix), np.diag([1.0, 0.0]))


def test_fit_from_buffer_uniform_samples(rng):
    """Test identification through the buffer on uniformly sampled data."""
    a, b = _stable_system(rng, 2, 1)
    controls = rng.normal(size=(1, 59))
    states = _simulate(a, b, rng.normal(size=2), controls)
    buffer = TrajectoryBuffer(capacity=60)
    buffer.extend(
        0.01 * np.arange(60), states, np.hstack([controls, np.zeros((1, 1))])
    )

    model = fit_from_buffer(buffer, make_identity_dictionary(2))

    assert model.dt == pytest.approx(0.01)
    np.testing.assert_allclose(model.A, a, atol=1e-7)
    np.testing.assert_allclose(model.B, b, atol=1e-7)


def test_fit_from_buffer_needs_samples():
    """Test that a nearly empty buffer cannot be identified."""
    buffer = TrajectoryBuffer(capacity=10)
    buffer.extend([0.0, 0.01, 0.02], np.zeros((2, 3)), np.zeros((1, 3)))

    with pytest.raises(IdentificationError):
        fit_from_buffer(buffer, make_robot_dictionary(1))


def test_predict_and_rollout_error(rng):
    """Test one-step prediction and zero multi-step error of an exact model."""
    a, b = _stable_system(rng, 2, 1)
    model = KoopmanModel(A=a, B=b, C=np.eye(2), dt=0.01)
    controls = rng.normal(size=(1, 30))
    states = _simulate(a, b, rng.normal(size=2), controls)

    np.testing.assert_allclose(
        predict(model, states[:, 0], controls[:, 0]), states[:, 1]
    )
    rmse = multi_step_rmse(model, make_identity_dictionary(2), states, controls, 5)
    assert rmse < 1e-12


def test_multi_step_rmse_horizon_too_long(rng):
    """Test that the horizon must fit inside the trajectory."""
    model = KoopmanModel(A=np.eye(2), B=np.zeros((2, 1)), C=np.eye(2), dt=0.01)

    with pytest.raises(InputError):
        multi_step_rmse(
            model, make_identity_dictionary(2), np.zeros((2, 4)), np.zeros((1, 3)), 4
        )


def test_model_json_round_trip(rng):
    """Test serializing a model and reading it back."""
    model = KoopmanModel(
        A=rng.normal(size=(6, 6)),
        B=rng.normal(size=(6, 1)),
        C=np.hstack([np.eye(2), np.zeros((2, 4))]),
        dt=0.0101,
    )

    restored = KoopmanModel.from_json(model.to_json())

    np.testing.assert_array_equal(restored.A, model.A)
    np.testing.assert_array_equal(restored.B, model.B)
    np.testing.assert_array_equal(restored.C, model.C)
    assert restored.dt == model.dt


def test_model_from_dict_missing_key():
    """Test that an incomplete document is an input error."""
    with pytest.raises(InputError):
        KoopmanModel.from_dict({"n": 1, "p": 1, "m": 1})


def test_fit_minimizes_one_step_residual(rng):
    """Test that perturbing the fitted operator never lowers the residual."""
    a, b = _stable_system(rng, 4, 1)
    x = rng.normal(size=(4, 60))
    u = rng.normal(size=(1, 60))
    xbar = a @ x + b @ u + 0.05 * rng.normal(size=(4, 60))
    omega = np.vstack([x, u])

    model = fit(x, xbar, u)

    k_fit = np.hstack([model.A, model.B])
    best = np.linalg.norm(xbar - k_fit @ omega)
    for _ in range(20):
        delta = 1e-3 * rng.normal(size=k_fit.shape)
        assert best <= np.linalg.norm(xbar - (k_fit + delta) @ omega)
