"""Model-based baselines: linearization MPC and iLQR reference generation."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike
from scipy.interpolate import PchipInterpolator

from .arrays import FloatArray, as_matrix, as_vector, require_finite
from .buffer import pchip_coefficients
from .dictionary import make_identity_dictionary
from .errors import GenerationError, InputError
from .mpc_core import MpcConfig, MpcDiagnostics, mpc_step
from .plant_sim import PlantParams, PlantState, rk4, state_derivative
from .qp_solver import QpWorkspace, SolverConfig

logger = logging.getLogger(__name__)

FD_STEP = 1e-6

# Batched dynamics: (states (n, N), controls (m, N)) -> (n, N).
Dynamics = Callable[[FloatArray, FloatArray], FloatArray]


@dataclass(frozen=True, eq=False)
class LinearizedModel:
    """Discrete affine model x+ = Ad x + Bd u + affine."""

    Ad: FloatArray
    Bd: FloatArray
    affine: FloatArray
    dt: float

    def __post_init__(self) -> None:
        for name, arr in (("Ad", self.Ad), ("Bd", self.Bd), ("affine", self.affine)):
            require_finite(arr, name)

    @property
    def A(self) -> FloatArray:
        return self.Ad

    @property
    def B(self) -> FloatArray:
        return self.Bd

    @property
    def drift(self) -> FloatArray:
        return self.affine


def _plant_dynamics(params: PlantParams) -> Dynamics:
    def dynamics(x: FloatArray, u: FloatArray) -> FloatArray:
        return state_derivative(params, x, u)

    return dynamics


def jacobians(
    f: Dynamics, x0: FloatArray, u0: FloatArray, eps: float = FD_STEP
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Central finite-difference Jacobians of a batched map.

    Returns:
        (f(x0, u0), df/dx, df/du)
    """
    n, m = x0.shape[0], u0.shape[0]
    perturb = eps * np.eye(n + m)
    points = np.hstack([perturb, -perturb])
    xs = x0[:, None] + points[:n]
    us = u0[:, None] + points[n:]
    values = f(np.hstack([x0[:, None], xs]), np.hstack([u0[:, None], us]))
    f0 = values[:, 0]
    forward = values[:, 1 : n + m + 1]
    backward = values[:, n + m + 1 :]
    jac = (forward - backward) / (2.0 * eps)
    return f0, jac[:, :n], jac[:, n:]


def linearize(
    plant: PlantParams | Dynamics,
    state: PlantState | ArrayLike,
    u0: ArrayLike,
    dt: float,
    eps: float = FD_STEP,
) -> LinearizedModel:
    """First-order Taylor model at (x0, u0), discretized with a zero-order hold.

    The continuous model xdot = Ac x + Bc u + c with c = f(x0, u0) - Ac x0 -
    Bc u0 is discretized exactly via the matrix exponential of
    [[Ac, Bc, c], [0, 0, 0], [0, 0, 0]].

    Args:
        plant: Plant parameters, or any batched continuous dynamics f(x, u)
        state: Expansion state
        u0: Expansion motor torque
        dt: Discretization step
        eps: Finite-difference step

    Returns:
        Discrete affine model valid near (x0, u0)
    """
    if not dt > 0:
        raise InputError(f"Discretization step must be positive, got {dt}")
    f = _plant_dynamics(plant) if isinstance(plant, PlantParams) else plant
    x0 = state.x if isinstance(state, PlantState) else as_vector(state, name="x0")
    u = as_vector(u0, name="u0")
    n, m = x0.shape[0], u.shape[0]

    f0, ac, bc = jacobians(f, x0, u, eps)
    c = f0 - ac @ x0 - bc @ u

    block = np.zeros((n + m + 1, n + m + 1))
    block[:n, :n] = ac
    block[:n, n : n + m] = bc
    block[:n, -1] = c
    discrete = scipy.linalg.expm(block * dt)
    return LinearizedModel(
        Ad=discrete[:n, :n],
        Bd=discrete[:n, n : n + m],
        affine=discrete[:n, -1],
        dt=float(dt),
    )


def linearization_mpc_step(
    params: PlantParams,
    cfg: MpcConfig,
    x0: ArrayLike,
    u_prev: ArrayLike,
    ref_window: ArrayLike,
    dt: float,
    warm: ArrayLike | None = None,
    *,
    solver_config: SolverConfig | None = None,
    workspace: QpWorkspace | None = None,
) -> tuple[FloatArray, MpcDiagnostics]:
    """Relinearize at the current operating point and run the delta-u MPC.

    ``cfg.Q`` weights the n plain state coordinates.
    """
    x = as_vector(x0, 2 * params.dof, name="x0")
    model = linearize(params, x, u_prev, dt)
    return mpc_step(
        model,
        cfg,
        x,
        u_prev,
        ref_window,
        make_identity_dictionary(x.shape[0]),
        warm,
        solver_config=solver_config,
        workspace=workspace,
    )


@dataclass(frozen=True, eq=False)
class ReferenceTrajectory:
    """Reference states on a uniform grid, with the torques that produced them."""

    X_ref: FloatArray
    U_ref: FloatArray
    dt: float

    def __post_init__(self) -> None:
        if self.X_ref.ndim != 2 or self.U_ref.ndim != 2:
            raise InputError("Reference states and torques must be matrices")
        if self.X_ref.shape[1] < 2:
            raise InputError("Reference needs at least two states")
        if self.U_ref.shape[1] != self.X_ref.shape[1] - 1:
            raise InputError(
                f"Expected {self.X_ref.shape[1] - 1} torque columns, "
                f"got {self.U_ref.shape[1]}"
            )
        if not self.dt > 0:
            raise InputError(f"Reference step must be positive, got {self.dt}")
        require_finite(self.X_ref, "reference states")
        require_finite(self.U_ref, "reference torques")

    @classmethod
    def constant(
        cls, x: ArrayLike, duration: float, dt: float, m: int
    ) -> ReferenceTrajectory:
        """Hold a single state for ``duration`` seconds."""
        state = as_vector(x, name="reference state")
        steps = max(1, math.ceil(duration / dt - 1e-9))
        return cls(
            X_ref=np.repeat(state[:, None], steps + 1, axis=1),
            U_ref=np.zeros((m, steps)),
            dt=float(dt),
        )

    @property
    def n(self) -> int:
        return int(self.X_ref.shape[0])

    @property
    def steps(self) -> int:
        """Number of intervals T."""
        return int(self.U_ref.shape[1])

    @property
    def times(self) -> FloatArray:
        return self.dt * np.arange(self.steps + 1)

    @property
    def duration(self) -> float:
        return self.dt * self.steps

    @property
    def initial_state(self) -> FloatArray:
        return self.X_ref[:, 0].copy()

    @property
    def final_state(self) -> FloatArray:
        return self.X_ref[:, -1].copy()

    @cached_property
    def _interpolant(self) -> PchipInterpolator:
        return pchip_coefficients(self.times, self.X_ref)

    def states_at(self, times: ArrayLike) -> FloatArray:
        """Reference states at arbitrary times, held constant outside the grid."""
        t = np.clip(as_vector(times, name="times"), 0.0, self.duration)
        return np.asarray(self._interpolant(t))


@dataclass(frozen=True, eq=False)
class IlqrWeights:
    """Quadratic cost sum (x-xf)'Q(x-xf) + u'Ru plus terminal (x_T-xf)'Qf(x_T-xf)."""

    Q: FloatArray
    R: FloatArray
    Qf: FloatArray

    @classmethod
    def swing_up(cls, dof: int) -> IlqrWeights:
        """Terminal-dominated weights for swing-up references."""
        return cls(
            Q=np.zeros(2 * dof),
            R=np.full(dof, 0.1),
            Qf=np.full(2 * dof, 1e4),
        )


@dataclass(frozen=True)
class IlqrSettings:
    """Iteration limits and Levenberg-Marquardt schedule."""

    max_iter: int = 200
    tol: float = 1e-8
    gain_tol: float = 1e-9
    mu_init: float = 1e-6
    mu_min: float = 1e-6
    mu_max: float = 1e10
    mu_factor: float = 10.0
    line_search: tuple[float, ...] = field(
        default_factory=lambda: tuple(2.0**-i for i in range(11))
    )


@dataclass(frozen=True, eq=False)
class IlqrResult:
    """Optimized trajectory and convergence information."""

    X: FloatArray
    U: FloatArray
    cost: float
    iterations: int
    converged: bool
    costs: tuple[float, ...]


def _trajectory_cost(
    X: FloatArray, U: FloatArray, xf: FloatArray, w: IlqrWeights
) -> float:
    err = X - xf[:, None]
    running = np.sum(w.Q[:, None] * err[:, :-1] ** 2) + np.sum(w.R[:, None] * U**2)
    terminal = np.sum(w.Qf * err[:, -1] ** 2)
    return float(running + terminal)


def _rollout(
    step_fn: Dynamics,
    x0: FloatArray,
    U: FloatArray,
    reference: tuple[FloatArray, FloatArray, FloatArray, FloatArray, float]
    | None = None,
) -> tuple[FloatArray, FloatArray]:
    """Simulate open loop, or closed loop around a previous trajectory.

    ``reference`` is (X_prev, U_prev, feedforward, feedback, alpha); controls
    are then u_k = U_prev_k + alpha k_k + K_k (x_k - X_prev_k).
    """
    steps = U.shape[1]
    X = np.empty((x0.shape[0], steps + 1))
    U_out = U.copy()
    X[:, 0] = x0
    for k in range(steps):
        if reference is not None:
            x_prev, u_prev, k_ff, k_fb, alpha = reference
            deviation = X[:, k] - x_prev[:, k]
            U_out[:, k] = u_prev[:, k] + alpha * k_ff[k] + k_fb[k] @ deviation
        X[:, k + 1] = step_fn(X[:, k : k + 1], U_out[:, k : k + 1])[:, 0]
    return X, U_out


def _step_jacobians(
    step_fn: Dynamics, X: FloatArray, U: FloatArray, eps: float
) -> tuple[FloatArray, FloatArray]:
    """Finite-difference Jacobians of the discrete map at every knot, batched."""
    n, m, steps = X.shape[0], U.shape[0], U.shape[1]
    perturb = eps * np.eye(n + m)
    points = np.hstack([perturb, -perturb])
    width = points.shape[1]
    xs = np.repeat(X[:, :steps], width, axis=1) + np.tile(points[:n], steps)
    us = np.repeat(U, width, axis=1) + np.tile(points[n:], steps)
    values = step_fn(xs, us).reshape(n, steps, width)
    jac = (values[:, :, : n + m] - values[:, :, n + m :]) / (2.0 * eps)
    jac = np.transpose(jac, (1, 0, 2))
    return jac[:, :, :n], jac[:, :, n:]


def _backward_pass(
    X: FloatArray,
    U: FloatArray,
    goal: FloatArray,
    w: IlqrWeights,
    fx: FloatArray,
    fu: FloatArray,
    mu: float,
) -> tuple[FloatArray, FloatArray, float] | None:
    """Riccati-like sweep with Levenberg regularization mu on the value Hessian.

    Returns:
        (feedforward gains, feedback gains, expected cost decrease at alpha=1),
        or None if some Quu is not positive definite
    """
    n, m, steps = X.shape[0], U.shape[0], U.shape[1]
    q_diag, r_diag = np.diag(w.Q), np.diag(w.R)
    k_ff = np.zeros((steps, m))
    k_fb = np.zeros((steps, m, n))
    v_x = 2.0 * w.Qf * (X[:, -1] - goal)
    v_xx = np.diag(2.0 * w.Qf)
    expected = 0.0
    for k in range(steps - 1, -1, -1):
        a, b = fx[k], fu[k]
        q_x = 2.0 * q_diag @ (X[:, k] - goal) + a.T @ v_x
        q_u = 2.0 * r_diag @ U[:, k] + b.T @ v_x
        q_xx = 2.0 * q_diag + a.T @ v_xx @ a
        q_uu = 2.0 * r_diag + b.T @ v_xx @ b
        q_ux = b.T @ v_xx @ a
        v_reg = v_xx + mu * np.eye(n)
        try:
            factor = scipy.linalg.cho_factor(2.0 * r_diag + b.T @ v_reg @ b)
        except np.linalg.LinAlgError:
            return None
        gain = -scipy.linalg.cho_solve(factor, q_u)
        feedback = -scipy.linalg.cho_solve(factor, b.T @ v_reg @ a)
        k_ff[k], k_fb[k] = gain, feedback

        expected -= float(gain @ q_u + 0.5 * gain @ q_uu @ gain)
        v_x = q_x + feedback.T @ q_uu @ gain + feedback.T @ q_u + q_ux.T @ gain
        v_xx = (
            q_xx
            + feedback.T @ q_uu @ feedback
            + feedback.T @ q_ux
            + q_ux.T @ feedback
        )
        v_xx = 0.5 * (v_xx + v_xx.T)
    return k_ff, k_fb, expected


def ilqr(
    step_fn: Dynamics,
    x0: ArrayLike,
    xf: ArrayLike,
    u_init: ArrayLike,
    weights: IlqrWeights,
    settings: IlqrSettings | None = None,
    fd_step: float = FD_STEP,
) -> IlqrResult:
    """Unconstrained Gauss-Newton iLQR.

    Args:
        step_fn: Batched discrete dynamics x+ = f(x, u)
        x0: Initial state
        xf: Goal state
        u_init: Initial control sequence, shape (m, T)
        weights: Cost weights
        settings: Iteration settings
        fd_step: Step of the finite-difference Jacobians

    Returns:
        Optimized trajectory; controls are not bounded

    Raises:
        GenerationError: If the cost becomes non-finite
    """
    cfg = settings or IlqrSettings()
    start = as_vector(x0, name="x0")
    goal = as_vector(xf, start.shape[0], name="xf")
    U = as_matrix(u_init, name="u_init")
    if U.shape[1] < 2:
        raise InputError(f"iLQR needs at least 2 steps, got {U.shape[1]}")

    X, U = _rollout(step_fn, start, U)
    cost = _trajectory_cost(X, U, goal, weights)
    if not math.isfinite(cost):
        raise GenerationError("Initial rollout cost is not finite")
    costs = [cost]
    mu = cfg.mu_init
    converged = False
    iteration = 0

    for iteration in range(1, cfg.max_iter + 1):
        fx, fu = _step_jacobians(step_fn, X, U, fd_step)
        sweep = _backward_pass(X, U, goal, weights, fx, fu, mu)
        while sweep is None and mu <= cfg.mu_max:
            mu *= cfg.mu_factor
            sweep = _backward_pass(X, U, goal, weights, fx, fu, mu)
        if sweep is None:
            logger.warning("iLQR regularization exceeded %.1e", cfg.mu_max)
            break
        k_ff, k_fb, expected = sweep

        if np.max(np.abs(k_ff)) < cfg.gain_tol or expected < cfg.tol * abs(cost):
            converged = True
            break

        accepted = False
        for alpha in cfg.line_search:
            X_new, U_new = _rollout(step_fn, start, U, (X, U, k_ff, k_fb, alpha))
            new_cost = _trajectory_cost(X_new, U_new, goal, weights)
            if math.isnan(new_cost):
                raise GenerationError(f"iLQR cost became NaN at iteration {iteration}")
            if new_cost < cost:
                accepted = True
                break

        if not accepted:
            mu *= cfg.mu_factor
            if mu > cfg.mu_max:
                logger.warning("iLQR line search failed at iteration %d", iteration)
                break
            continue

        decrease = (cost - new_cost) / abs(cost)
        X, U, cost = X_new, U_new, new_cost
        costs.append(cost)
        mu = max(mu / cfg.mu_factor, cfg.mu_min)
        logger.debug(
            "iLQR iteration %d: cost %.8g (alpha %.3g)", iteration, cost, alpha
        )
        if decrease < cfg.tol:
            converged = True
            break

    return IlqrResult(X, U, cost, iteration, converged, tuple(costs))


def discrete_plant_step(params: PlantParams, dt: float) -> Dynamics:
    """Batched RK4 step of the unclamped plant over ``dt``."""

    def step_fn(x: FloatArray, u: FloatArray) -> FloatArray:
        return rk4(lambda _t, s: state_derivative(params, s, u), x, 0.0, dt)

    return step_fn


def ilqr_reference(
    params: PlantParams,
    x0: ArrayLike,
    xf: ArrayLike,
    steps: int,
    dt: float,
    weights: IlqrWeights | None = None,
    settings: IlqrSettings | None = None,
) -> ReferenceTrajectory:
    """Swing-up style reference from x0 to xf generated with iLQR.

    The returned torques may exceed the motor limit.

    Raises:
        GenerationError: If iLQR diverges
    """
    if steps < 2:
        raise InputError(f"Reference needs at least 2 steps, got {steps}")
    w = weights or IlqrWeights.swing_up(params.dof)
    result = ilqr(
        discrete_plant_step(params, dt),
        x0,
        xf,
        np.zeros((params.dof, steps)),
        w,
        settings,
    )
    final_error = np.max(np.abs(result.X[:, -1] - as_vector(xf)))
    logger.info(
        "iLQR reference: %d iterations, cost %.6g, final error %.3g",
        result.iterations,
        result.cost,
        final_error,
    )
    if not result.converged:
        logger.warning("iLQR stopped before convergence")
    return ReferenceTrajectory(X_ref=result.X, U_ref=result.U, dt=float(dt))
