"""Lifting dictionaries for EDMD.

A dictionary maps an n-dimensional state to p scalar observables. The first n
observables are always the state coordinates themselves, so the original state
is recovered from a lifted state with C = [I_n 0].
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from .arrays import FloatArray, as_matrix, as_vector
from .errors import ConfigurationError, InputError

# A lifted state z = Psi(x); the first n entries are x itself.
LiftedState = FloatArray

SUPPORTED_JOINT_COUNTS = (1, 2)


@dataclass(frozen=True)
class BasisFunction:
    """A named scalar observable.

    ``func`` is evaluated on a state matrix of shape (n, N) and returns the
    N observable values, one per column.
    """

    name: str
    func: Callable[[FloatArray], FloatArray]


def _coordinate(index: int) -> Callable[[FloatArray], FloatArray]:
    def projection(states: FloatArray) -> FloatArray:
        return states[index]

    return projection


def _sin(index: int) -> Callable[[FloatArray], FloatArray]:
    def sin_term(states: FloatArray) -> FloatArray:
        return np.sin(states[index])

    return sin_term


def _cos(index: int) -> Callable[[FloatArray], FloatArray]:
    def cos_term(states: FloatArray) -> FloatArray:
        return np.cos(states[index])

    return cos_term


def _velocity_sin(angle: int, velocity: int) -> Callable[[FloatArray], FloatArray]:
    def velocity_sin_term(states: FloatArray) -> FloatArray:
        return states[velocity] * np.sin(states[angle])

    return velocity_sin_term


def _velocity_cos(angle: int, velocity: int) -> Callable[[FloatArray], FloatArray]:
    def velocity_cos_term(states: FloatArray) -> FloatArray:
        return states[velocity] * np.cos(states[angle])

    return velocity_cos_term


@dataclass(frozen=True)
class LiftingDictionary:
    """Ordered set of basis functions whose first ``n`` entries are x_1..x_n."""

    n: int
    basis: tuple[BasisFunction, ...]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ConfigurationError(f"State dimension must be positive, got {self.n}")
        if len(self.basis) < self.n:
            raise ConfigurationError(
                f"Dictionary needs at least n={self.n} basis functions, "
                f"got {len(self.basis)}"
            )

    @property
    def p(self) -> int:
        """Lifted dimension."""
        return len(self.basis)

    @property
    def names(self) -> list[str]:
        """Names of the basis functions in lifting order."""
        return [b.name for b in self.basis]

    @property
    def selector(self) -> FloatArray:
        """State reconstruction matrix C = [I_n 0] of shape (n, p)."""
        c = np.zeros((self.n, self.p))
        c[:, : self.n] = np.eye(self.n)
        return c

    def lift(self, x: ArrayLike) -> LiftedState:
        """Lift a single state.

        Args:
            x: State vector of length n

        Returns:
            Lifted state z with z[j] = Psi_j(x)

        Raises:
            InputError: If x does not have length n
        """
        state = as_vector(x, self.n, name="state")
        return self.lift_matrix(state.reshape(self.n, 1))[:, 0]

    def lift_matrix(self, states: ArrayLike) -> FloatArray:
        """Lift a state matrix column by column.

        Args:
            states: Matrix of shape (n, N) whose columns are states

        Returns:
            Matrix of shape (p, N)

        Raises:
            InputError: If the matrix does not have n rows
        """
        x = as_matrix(states, rows=self.n, name="state matrix")
        lifted = np.empty((self.p, x.shape[1]))
        for row, basis_function in enumerate(self.basis):
            lifted[row] = basis_function.func(x)
        return lifted

    def reconstruct(self, z: ArrayLike) -> FloatArray:
        """Recover the state from a lifted state (apply C = [I_n 0])."""
        lifted = as_vector(z, self.p, name="lifted state")
        return lifted[: self.n].copy()


def make_identity_dictionary(n: int) -> LiftingDictionary:
    """Dictionary with only the coordinate projections (p = n)."""
    return LiftingDictionary(
        n=n,
        basis=tuple(BasisFunction(f"x{i + 1}", _coordinate(i)) for i in range(n)),
    )


def make_robot_dictionary(n_joints: int) -> LiftingDictionary:
    """Trigonometric dictionary for planar 1R/2R arms.

    Ordering: all joint angles, all joint velocities, then sin, cos,
    omega*sin and omega*cos terms, each group over all joints.

    Args:
        n_joints: Number of revolute joints (1 or 2)

    Returns:
        Dictionary with n = 2*n_joints and p = 6*n_joints

    Raises:
        ConfigurationError: If the joint count is not supported
    """
    if n_joints not in SUPPORTED_JOINT_COUNTS:
        raise ConfigurationError(
            f"Unsupported joint count {n_joints}; "
            f"expected one of {SUPPORTED_JOINT_COUNTS}"
        )

    joints = range(n_joints)
    theta = [f"theta{i + 1}" for i in joints]
    omega = [f"omega{i + 1}" for i in joints]

    basis: list[BasisFunction] = []
    basis += [BasisFunction(theta[i], _coordinate(i)) for i in joints]
    basis += [BasisFunction(omega[i], _coordinate(n_joints + i)) for i in joints]
    basis += [BasisFunction(f"sin({theta[i]})", _sin(i)) for i in joints]
    basis += [BasisFunction(f"cos({theta[i]})", _cos(i)) for i in joints]
    basis += [
        BasisFunction(f"{omega[i]}*sin({theta[i]})", _velocity_sin(i, n_joints + i))
        for i in joints
    ]
    basis += [
        BasisFunction(f"{omega[i]}*cos({theta[i]})", _velocity_cos(i, n_joints + i))
        for i in joints
    ]
    return LiftingDictionary(n=2 * n_joints, basis=tuple(basis))


def lifted_weights(
    dictionary: LiftingDictionary,
    state_weights: ArrayLike,
    nonlinear_weight: float = 0.0,
) -> FloatArray:
    """Build a diagonal lifted-state weight vector.

    Args:
        dictionary: Dictionary the weights are for
        state_weights: Weights on the n state coordinates
        nonlinear_weight: Weight applied to every non-coordinate observable

    Returns:
        Weight vector of length p
    """
    weights = as_vector(state_weights, dictionary.n, name="state weights")
    if np.any(weights < 0) or nonlinear_weight < 0:
        raise InputError("Weights must be non-negative")
    q = np.full(dictionary.p, float(nonlinear_weight))
    q[: dictionary.n] = weights
    return q
