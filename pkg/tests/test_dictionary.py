"""Tests for dictionary module."""

import math

import numpy as np
import pytest

from adaptive_kmpc.dictionary import (
    lifted_weights,
    make_identity_dictionary,
    make_robot_dictionary,
)
from adaptive_kmpc.errors import ConfigurationError, InputError


def test_robot_dictionary_dimensions():
    """Test lifted dimensions of the 1R and 2R dictionaries."""
    one = make_robot_dictionary(1)
    two = make_robot_dictionary(2)

    assert (one.n, one.p) == (2, 6)
    assert (two.n, two.p) == (4, 12)


def test_robot_dictionary_rejects_three_joints():
    """Test that unsupported joint counts raise a configuration error."""
    with pytest.raises(ConfigurationError, match="Unsupported joint count"):
        make_robot_dictionary(3)


def test_robot_dictionary_ordering():
    """Test that angles come first, then velocities, then grouped terms."""
    names = make_robot_dictionary(2).names

    assert names == [
        "theta1",
        "theta2",
        "omega1",
        "omega2",
        "sin(theta1)",
        "sin(theta2)",
        "cos(theta1)",
        "cos(theta2)",
        "omega1*sin(theta1)",
        "omega2*sin(theta2)",
        "omega1*cos(theta1)",
        "omega2*cos(theta2)",
    ]


def test_lift_at_rest():
    """Test lifting the hanging rest state."""
    z = make_robot_dictionary(1).lift([0.0, 0.0])

    np.testing.assert_array_equal(z, [0.0, 0.0, 0.0, 1.0, 0.0, 0.0])


def test_lift_quarter_turn():
    """Test lifting at theta = pi/2 with velocity 2."""
    z = make_robot_dictionary(1).lift([math.pi / 2, 2.0])

    np.testing.assert_allclose(
        z, [math.pi / 2, 2.0, 1.0, 0.0, 2.0, 0.0], atol=1e-15
    )


def test_lift_2r_rest():
    """Test the 2R lift of the zero state."""
    z = make_robot_dictionary(2).lift(np.zeros(4))

    np.testing.assert_array_equal(z[:4], 0.0)
    np.testing.assert_array_equal(z[6:8], 1.0)
    np.testing.assert_array_equal(z[8:], 0.0)


def test_lift_rejects_wrong_length():
    """Test that a state of the wrong length is an input error."""
    with pytest.raises(InputError):
        make_robot_dictionary(1).lift([0.0, 0.0, 0.0])


def test_lift_matrix_matches_columnwise_lift(rng):
    """Test that lift_matrix equals lift applied to each column."""
    d = make_robot_dictionary(2)
    states = rng.normal(size=(4, 7))

    lifted = d.lift_matrix(states)

    for k in range(states.shape[1]):
        np.testing.assert_array_equal(lifted[:, k], d.lift(states[:, k]))
    np.testing.assert_array_equal(lifted[:4], states)


def test_lift_matrix_empty():
    """Test that a zero-column matrix lifts to a zero-column matrix."""
    lifted = make_robot_dictionary(1).lift_matrix(np.zeros((2, 0)))

    assert lifted.shape == (6, 0)


def test_lift_matrix_rejects_wrong_rows():
    """Test that a matrix with the wrong number of rows is rejected."""
    with pytest.raises(InputError):
        make_robot_dictionary(1).lift_matrix(np.zeros((3, 5)))


def test_reconstruct_round_trip(rng):
    """Test exact state recovery for random 2R states."""
    d = make_robot_dictionary(2)

    for x in rng.normal(scale=4.0, size=(100, 4)):
        assert np.array_equal(d.reconstruct(d.lift(x)), x)


def test_reconstruct_uses_selector():
    """Test that reconstruct agrees with the selector matrix C."""
    d = make_robot_dictionary(1)
    z = np.arange(1.0, 7.0)

    np.testing.assert_array_equal(d.reconstruct(z), [1.0, 2.0])
    np.testing.assert_array_equal(d.selector @ z, [1.0, 2.0])


def test_angles_are_not_wrapped():
    """Test that raw angles beyond pi are lifted unchanged."""
    z = make_robot_dictionary(1).lift([7.0, 0.0])

    assert z[0] == 7.0
    assert z[2] == pytest.approx(math.sin(7.0))


def test_identity_dictionary():
    """Test the coordinate-only dictionary."""
    d = make_identity_dictionary(3)

    assert d.p == 3
    np.testing.assert_array_equal(d.lift([1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])


def test_lifted_weights_zero_on_nonlinear_terms():
    """Test that lifted weights copy state weights and zero the rest."""
    q = lifted_weights(make_robot_dictionary(1), [10.0, 0.1])

    np.testing.assert_array_equal(q, [10.0, 0.1, 0.0, 0.0, 0.0, 0.0])


def test_lifted_weights_rejects_negative():
    """Test that negative weights are rejected."""
    with pytest.raises(InputError):
        lifted_weights(make_robot_dictionary(1), [-1.0, 0.1])
