"""Tests for buffer module."""

import math

import numpy as np
import pytest

from adaptive_kmpc.buffer import Sample, TrajectoryBuffer, pchip_coefficients
from adaptive_kmpc.errors import IdentificationError, InputError
from adaptive_kmpc.plant_sim import JitterMode, jittered_clock


def _sine_buffer(times):
    buffer = TrajectoryBuffer(capacity=len(times))
    for t in times:
        w = 2.0 * math.pi
        state = [math.sin(w * t), w * math.cos(w * t)]
        buffer.push(Sample.of(t, state, [math.cos(w * t)]))
    return buffer


def test_push_evicts_oldest_when_full():
    """Test FIFO eviction at capacity."""
    buffer = TrajectoryBuffer(capacity=3)
    for k in range(5):
        buffer.push(Sample.of(0.1 * k, [k, 0.0], [0.0]))

    assert buffer.is_full
    assert len(buffer) == 3
    np.testing.assert_allclose(buffer.times(), [0.2, 0.3, 0.4])
    assert buffer.last_time == pytest.approx(0.4)


def test_push_rejects_non_increasing_time():
    """Test that a repeated timestamp is rejected."""
    buffer = TrajectoryBuffer(capacity=4)
    buffer.push(Sample.of(1.0, [0.0, 0.0], [0.0]))

    with pytest.raises(InputError, match="does not follow"):
        buffer.push(Sample.of(1.0, [0.0, 0.0], [0.0]))


def test_push_rejects_dimension_change():
    """Test that samples must keep their dimensions."""
    buffer = TrajectoryBuffer(capacity=4)
    buffer.push(Sample.of(0.0, [0.0, 0.0], [0.0]))

    with pytest.raises(InputError):
        buffer.push(Sample.of(0.1, [0.0, 0.0, 0.0, 0.0], [0.0]))


def test_sample_rejects_non_finite():
    """Test that NaN states are rejected."""
    with pytest.raises(InputError):
        Sample.of(0.0, [math.nan, 0.0], [0.0])


def test_capacity_must_be_at_least_two():
    """Test the minimum buffer capacity."""
    with pytest.raises(InputError):
        TrajectoryBuffer(capacity=1)


def test_extend_and_matrices():
    """Test bulk fill and the state/control matrices."""
    buffer = TrajectoryBuffer(capacity=10)
    buffer.extend(
        [0.0, 0.1, 0.2], [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], [[7.0, 8.0, 9.0]]
    )

    assert buffer.states().shape == (2, 3)
    np.testing.assert_array_equal(buffer.controls(), [[7.0, 8.0, 9.0]])
    assert buffer.mean_dt() == pytest.approx(0.1)


def test_snapshot_is_unaffected_by_later_pushes():
    """Test that snapshots are immutable copies."""
    buffer = TrajectoryBuffer(capacity=2)
    buffer.push(Sample.of(0.0, [0.0, 0.0], [0.0]))
    snap = buffer.snapshot()
    buffer.push(Sample.of(0.1, [1.0, 0.0], [0.0]))
    buffer.push(Sample.of(0.2, [2.0, 0.0], [0.0]))

    assert len(snap) == 1
    assert snap[0].t == 0.0


def test_clear():
    """Test emptying the buffer."""
    buffer = TrajectoryBuffer(capacity=3)
    buffer.push(Sample.of(0.0, [0.0, 0.0], [0.0]))
    buffer.clear()

    assert len(buffer) == 0
    assert buffer.last_time is None


def test_mean_dt_needs_two_samples():
    """Test that mean spacing of a single sample is an error."""
    buffer = TrajectoryBuffer(capacity=3)
    buffer.push(Sample.of(0.0, [0.0, 0.0], [0.0]))

    with pytest.raises(InputError):
        buffer.mean_dt()


def test_resample_too_few_samples():
    """Test that three samples cannot be resampled."""
    buffer = TrajectoryBuffer(capacity=5)
    buffer.extend([0.0, 0.1, 0.2], np.zeros((2, 3)), np.zeros((1, 3)))

    with pytest.raises(IdentificationError):
        buffer.resample(0.1)


def test_resample_span_shorter_than_two_steps():
    """Test that a grid step longer than half the span is rejected."""
    buffer = TrajectoryBuffer(capacity=5)
    buffer.extend([0.0, 0.1, 0.2, 0.3], np.zeros((2, 4)), np.zeros((1, 4)))

    with pytest.raises(IdentificationError):
        buffer.resample(0.2)


def test_resample_shifted_matrices():
    """Test that Xbar is X shifted by one grid step."""
    times = np.linspace(0.0, 1.0, 11)
    states = np.vstack([times**2, 2.0 * times])
    buffer = TrajectoryBuffer(capacity=20)
    buffer.extend(times, states, times[None, :])

    data = buffer.resample(0.1)

    assert data.n_pairs == 10
    np.testing.assert_allclose(data.X[:, 1:], data.Xbar[:, :-1])
    np.testing.assert_allclose(data.U[0], times[:-1], atol=1e-12)


def test_pchip_knot_exactness(rng):
    """Test that the interpolant reproduces knot values."""
    t = np.cumsum(rng.uniform(0.005, 0.02, size=50))
    y = rng.normal(size=(3, 50))

    values = pchip_coefficients(t, y)(t)

    np.testing.assert_allclose(values, y, rtol=0.0, atol=1e-13)


def test_pchip_preserves_monotonicity(rng):
    """Test monotone data on 100 random datasets."""
    for _ in range(100):
        t = np.cumsum(rng.uniform(0.1, 1.0, size=12))
        y = np.cumsum(rng.exponential(size=12) * (rng.uniform(size=12) > 0.3))
        dense = np.linspace(t[0], t[-1], 500)

        values = pchip_coefficients(t, y)(dense)

        assert np.all(np.diff(values) >= -1e-12)


def test_pchip_flat_between_equal_knots():
    """Test that a plateau in the data stays flat."""
    interp = pchip_coefficients([0.0, 1.0, 2.0, 3.0], [0.0, 1.0, 1.0, 2.0])

    np.testing.assert_allclose(interp(np.linspace(1.0, 2.0, 11)), 1.0)


def test_pchip_rejects_decreasing_times():
    """Test that knot times must increase."""
    with pytest.raises(InputError):
        pchip_coefficients([0.0, 2.0, 1.0], [0.0, 1.0, 2.0])


@pytest.mark.parametrize("seed", range(5))
def test_jittered_resampling_accuracy(seed):
    """Test resampling a 1 Hz sine recorded with a 90-110 Hz jittered clock."""
    times = jittered_clock(100.0, JitterMode.UNIFORM, seed, 250)
    buffer = _sine_buffer(times)

    data = buffer.resample(0.01)
    grid = times[0] + 0.01 * np.arange(data.n_pairs)
    error = np.abs(data.X[0] - np.sin(2.0 * math.pi * grid))

    # Shape-preserving slopes on an uneven grid give O(h^2) error, not O(h^4).
    assert np.max(error) < 1e-3
