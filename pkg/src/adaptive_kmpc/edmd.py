"""Extended dynamic mode decomposition with control.

Identifies K = [A B] such that Xbar_lift ~ A X_lift + B U in the Frobenius
least-squares sense, via the Moore–Penrose pseudoinverse of the stacked data
matrix Omega = [X_lift; U].
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Any

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike

from .arrays import FloatArray, as_matrix, as_vector, require_finite
from .buffer import TrajectoryBuffer
from .dictionary import LiftedState, LiftingDictionary
from .errors import InputError, NumericalError

logger = logging.getLogger(__name__)

DEFAULT_REL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class KoopmanModel:
    """Lifted linear model z+ = A z + B u with state reconstruction x = C z."""

    A: FloatArray
    B: FloatArray
    C: FloatArray
    dt: float

    def __post_init__(self) -> None:
        p = self.A.shape[0]
        if self.A.shape != (p, p):
            raise InputError(f"A must be square, got shape {self.A.shape}")
        if self.B.ndim != 2 or self.B.shape[0] != p:
            raise InputError(f"B must have {p} rows, got shape {self.B.shape}")
        if self.C.ndim != 2 or self.C.shape[1] != p:
            raise InputError(f"C must have {p} columns, got shape {self.C.shape}")
        for name, matrix in (("A", self.A), ("B", self.B), ("C", self.C)):
            require_finite(matrix, name)

    @property
    def p(self) -> int:
        """Lifted dimension."""
        return int(self.A.shape[0])

    @property
    def n(self) -> int:
        """State dimension."""
        return int(self.C.shape[0])

    @property
    def m(self) -> int:
        """Control dimension."""
        return int(self.B.shape[1])

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation with row-major nested lists."""
        return {
            "n": self.n,
            "p": self.p,
            "m": self.m,
            "dt": self.dt,
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
        }

    def to_json(self) -> str:
        """Serialize to a JSON document."""
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> KoopmanModel:
        """Rebuild a model from :meth:`to_dict` output.

        Raises:
            InputError: If keys are missing or dimensions disagree
        """
        try:
            p, n, m = int(data["p"]), int(data["n"]), int(data["m"])
            model = cls(
                A=as_matrix(data["A"], p, p, name="A"),
                B=as_matrix(data["B"], p, m, name="B"),
                C=as_matrix(data["C"], n, p, name="C"),
                dt=float(data["dt"]),
            )
        except KeyError as exc:
            raise InputError(f"Model document is missing key {exc}") from exc
        return model

    @classmethod
    def from_json(cls, text: str) -> KoopmanModel:
        """Parse a model from :meth:`to_json` output."""
        return cls.from_dict(json.loads(text))


def pseudo_inverse(matrix: ArrayLike, rel_tol: float = DEFAULT_REL_TOL) -> FloatArray:
    """SVD-based Moore–Penrose pseudoinverse.

    Singular values below ``rel_tol * sigma_max`` are treated as zero.

    Raises:
        InputError: If the matrix is not finite or ``rel_tol`` is negative
        NumericalError: If the SVD does not converge
    """
    m = as_matrix(matrix, name="matrix")
    require_finite(m, "matrix")
    if rel_tol < 0:
        raise InputError(f"rel_tol must be non-negative, got {rel_tol}")
    try:
        return np.asarray(scipy.linalg.pinv(m, atol=0.0, rtol=rel_tol))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc


def fit(
    x_lift: ArrayLike,
    xbar_lift: ArrayLike,
    controls: ArrayLike,
    rel_tol: float = DEFAULT_REL_TOL,
    *,
    n: int | None = None,
    dt: float = 1.0,
    ridge: float = 0.0,
) -> KoopmanModel:
    """Least-squares Koopman approximation K = Xbar_lift Omega^+.

    Args:
        x_lift: Lifted states, shape (p, N')
        xbar_lift: Lifted successor states, shape (p, N')
        controls: Controls, shape (m, N')
        rel_tol: Relative singular value cut-off of the pseudoinverse
        n: State dimension for C = [I_n 0]; defaults to p
        dt: Sample step the data was taken at
        ridge: Tikhonov weight; 0 gives plain least squares

    Returns:
        Fitted model; the minimum-norm minimizer when Omega is rank deficient

    Raises:
        InputError: On inconsistent dimensions or non-finite data
    """
    xl = as_matrix(x_lift, name="lifted states")
    p, n_pairs = xl.shape
    xbar = as_matrix(xbar_lift, p, n_pairs, name="lifted successor states")
    u = as_matrix(controls, cols=n_pairs, name="controls")
    if n_pairs < 1:
        raise InputError("EDMD needs at least one snapshot pair")
    for name, matrix in (("lifted states", xl), ("successors", xbar), ("controls", u)):
        require_finite(matrix, name)
    if ridge < 0:
        raise InputError(f"ridge must be non-negative, got {ridge}")
    n_state = p if n is None else n
    if not 1 <= n_state <= p:
        raise InputError(f"State dimension {n_state} must be in [1, {p}]")

    omega = np.vstack([xl, u])
    if ridge > 0:
        gram = omega @ omega.T + ridge * np.eye(omega.shape[0])
        k = scipy.linalg.solve(gram, omega @ xbar.T, assume_a="pos").T
    else:
        k = xbar @ pseudo_inverse(omega, rel_tol)

    c = np.zeros((n_state, p))
    c[:, :n_state] = np.eye(n_state)
    return KoopmanModel(A=k[:, :p].copy(), B=k[:, p:].copy(), C=c, dt=float(dt))


def fit_from_buffer(
    buffer: TrajectoryBuffer,
    dictionary: LiftingDictionary,
    dt: float | None = None,
    rel_tol: float = DEFAULT_REL_TOL,
    ridge: float = 0.0,
) -> KoopmanModel:
    """Resample the buffer, lift both snapshot matrices and fit.

    Args:
        buffer: Source data
        dictionary: Lifting used for the states
        dt: Grid step; defaults to the buffer's mean sample spacing
        rel_tol: Pseudoinverse cut-off
        ridge: Optional Tikhonov weight
    """
    step = buffer.mean_dt() if dt is None else dt
    data = buffer.resample(step)
    model = fit(
        dictionary.lift_matrix(data.X),
        dictionary.lift_matrix(data.Xbar),
        data.U,
        rel_tol,
        n=dictionary.n,
        dt=step,
        ridge=ridge,
    )
    logger.debug("EDMD fit on %d pairs at dt=%.6g", data.n_pairs, step)
    return model


def predict(model: KoopmanModel, z: ArrayLike, u: ArrayLike) -> LiftedState:
    """One lifted step A z + B u."""
    state = as_vector(z, model.p, name="lifted state")
    control = as_vector(u, model.m, name="control")
    return model.A @ state + model.B @ control


def multi_step_rmse(
    model: KoopmanModel,
    dictionary: LiftingDictionary,
    states: ArrayLike,
    controls: ArrayLike,
    horizon: int,
) -> float:
    """Open-loop prediction error of a model along a recorded trajectory.

    From every start index the state is lifted once, propagated ``horizon``
    steps with the recorded controls and reconstructed; the RMSE over all
    starts, steps and coordinates is returned.

    Args:
        model: Model to evaluate
        dictionary: Lifting matching the model
        states: Trajectory, shape (n, N)
        controls: Controls applied after each state, shape (m, N - 1) or (m, N)
        horizon: Steps per rollout

    Raises:
        InputError: If the trajectory is not longer than the horizon
    """
    x = as_matrix(states, rows=dictionary.n, name="states")
    u = as_matrix(controls, rows=model.m, name="controls")
    n_steps = x.shape[1] - 1
    if horizon < 1:
        raise InputError(f"Horizon must be at least 1, got {horizon}")
    if horizon > n_steps or u.shape[1] < n_steps:
        raise InputError(
            f"Horizon {horizon} needs a trajectory longer than {n_steps} steps"
        )

    n_starts = n_steps - horizon + 1
    z = dictionary.lift_matrix(x[:, :n_starts])
    squared = 0.0
    for step in range(1, horizon + 1):
        z = model.A @ z + model.B @ u[:, step - 1 : step - 1 + n_starts]
        error = model.C @ z - x[:, step : step + n_starts]
        squared += float(np.sum(error**2))
    return float(np.sqrt(squared / (horizon * n_starts * dictionary.n)))
