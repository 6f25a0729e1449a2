"""Dense ADMM solver for convex box-style quadratic programs.

Solves

    minimize    1/2 x' P x + q' x
    subject to  b_l <= G x <= b_u

with the operator-splitting scheme of OSQP: a fixed penalty rho, over-relaxation
alpha, Ruiz equilibration of the KKT matrix, and a final solution polish on the
guessed active set. Problem sizes here are small (tens of variables), so all
linear algebra is dense.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike

from .arrays import FloatArray, as_matrix, as_vector
from .errors import InputError, NumericalError

logger = logging.getLogger(__name__)

# Bounds at or beyond this magnitude are treated as infinite.
INFINITY = 1e20

_RHO_MIN = 1e-6
_RHO_EQUALITY_FACTOR = 1e3
_MIN_SCALING = 1e-4
_MAX_SCALING = 1e4


class SolveStatus(Enum):
    """Outcome of a QP solve."""

    SOLVED = "solved"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class SolverConfig:
    """ADMM settings."""

    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    eps_abs: float = 1e-6
    eps_rel: float = 0.0
    eps_infeasible: float = 1e-8
    max_iter: int = 4000
    check_interval: int = 25
    scaling_iter: int = 10
    polish: bool = True
    polish_delta: float = 1e-9
    polish_refine_iter: int = 5

    def __post_init__(self) -> None:
        if self.rho <= 0 or self.sigma <= 0:
            raise InputError("rho and sigma must be positive")
        if not 0 < self.alpha < 2:
            raise InputError(f"alpha must lie in (0, 2), got {self.alpha}")
        if self.max_iter < 1 or self.check_interval < 1:
            raise InputError("max_iter and check_interval must be positive")


@dataclass(frozen=True, eq=False)
class QpProblem:
    """Dense QP data. Infinite bounds may be given as +/- inf."""

    P: FloatArray
    q: FloatArray
    G: FloatArray
    b_l: FloatArray
    b_u: FloatArray

    def __post_init__(self) -> None:
        d = self.q.shape[0]
        if self.P.shape != (d, d):
            raise InputError(f"P must be {d}x{d}, got {self.P.shape}")
        if self.G.ndim != 2 or self.G.shape[1] != d:
            raise InputError(f"G must have {d} columns, got {self.G.shape}")
        c = self.G.shape[0]
        if self.b_l.shape != (c,) or self.b_u.shape != (c,):
            raise InputError(f"Bounds must have length {c}")
        scale = max(1.0, float(np.max(np.abs(self.P), initial=0.0)))
        if not np.allclose(self.P, self.P.T, rtol=0.0, atol=1e-12 * scale):
            raise InputError("P must be symmetric")

    @classmethod
    def build(
        cls,
        P: ArrayLike,
        q: ArrayLike,
        G: ArrayLike | None = None,
        b_l: ArrayLike | None = None,
        b_u: ArrayLike | None = None,
    ) -> QpProblem:
        """Create a problem from array-likes; missing bounds are infinite."""
        q_vec = as_vector(q, name="q")
        d = q_vec.shape[0]
        p_mat = as_matrix(P, d, d, name="P")
        g_mat = np.zeros((0, d)) if G is None else as_matrix(G, cols=d, name="G")
        c = g_mat.shape[0]
        lower = np.full(c, -np.inf) if b_l is None else as_vector(b_l, c, "b_l")
        upper = np.full(c, np.inf) if b_u is None else as_vector(b_u, c, "b_u")
        return cls(P=p_mat, q=q_vec, G=g_mat, b_l=lower, b_u=upper)

    @property
    def d(self) -> int:
        """Number of decision variables."""
        return int(self.q.shape[0])

    @property
    def c(self) -> int:
        """Number of constraint rows."""
        return int(self.G.shape[0])

    def objective(self, x: FloatArray) -> float:
        """Evaluate 1/2 x' P x + q' x."""
        return float(0.5 * x @ self.P @ x + self.q @ x)


@dataclass(frozen=True, eq=False)
class QpSolution:
    """Solver result. ``y`` are constraint multipliers (positive at upper bounds)."""

    x: FloatArray
    y: FloatArray
    status: SolveStatus
    primal_residual: float
    dual_residual: float
    iterations: int
    objective: float
    polished: bool = False


def kkt_residuals(
    problem: QpProblem, x: ArrayLike, y: ArrayLike
) -> tuple[float, float]:
    """Primal and dual infinity-norm residuals of a candidate point.

    Args:
        problem: QP data
        x: Primal point
        y: Constraint multipliers

    Returns:
        (constraint violation of G x, norm of P x + q + G' y)
    """
    xv = as_vector(x, problem.d, name="x")
    yv = as_vector(y, problem.c, name="y")
    gx = problem.G @ xv
    violation = np.maximum(gx - problem.b_u, 0.0) + np.maximum(problem.b_l - gx, 0.0)
    primal = float(np.max(violation, initial=0.0))
    stationarity = problem.P @ xv + problem.q + problem.G.T @ yv
    dual = float(np.max(np.abs(stationarity), initial=0.0))
    return primal, dual


def _constraint_types(lower: FloatArray, upper: FloatArray) -> FloatArray:
    """Encode rows as 0 (loose), 1 (inequality) or 2 (equality)."""
    loose = (lower <= -INFINITY) & (upper >= INFINITY)
    equality = np.abs(upper - lower) < 1e-12 * np.maximum(1.0, np.abs(upper))
    kinds = np.ones(lower.shape[0])
    kinds[loose] = 0.0
    kinds[equality & ~loose] = 2.0
    return kinds


@dataclass(eq=False)
class QpWorkspace:
    """Scaling and factorization of the ADMM linear system for fixed P and G.

    Reusable across solves whose P, G and constraint types are unchanged (only
    q and the bounds differ), which is the situation of a fixed-model MPC.
    """

    P: FloatArray
    G: FloatArray
    kinds: FloatArray
    config: SolverConfig
    D: FloatArray = field(init=False)
    E: FloatArray = field(init=False)
    cost_scale: float = field(init=False)
    P_scaled: FloatArray = field(init=False)
    G_scaled: FloatArray = field(init=False)
    rho: FloatArray = field(init=False)
    factor: tuple[FloatArray, bool] = field(init=False)

    def __post_init__(self) -> None:
        self._equilibrate()
        self.rho = np.where(
            self.kinds == 0.0,
            _RHO_MIN,
            np.where(
                self.kinds == 2.0,
                _RHO_EQUALITY_FACTOR * self.config.rho,
                self.config.rho,
            ),
        )
        d = self.P.shape[0]
        kkt = (
            self.P_scaled
            + self.config.sigma * np.eye(d)
            + self.G_scaled.T @ (self.rho[:, None] * self.G_scaled)
        )
        self.factor = scipy.linalg.cho_factor(kkt)

    @classmethod
    def for_problem(cls, problem: QpProblem, config: SolverConfig) -> QpWorkspace:
        """Build a workspace matching ``problem``."""
        lower, upper = _clip_bounds(problem)
        return cls(
            P=problem.P.copy(),
            G=problem.G.copy(),
            kinds=_constraint_types(lower, upper),
            config=config,
        )

    def matches(self, problem: QpProblem, config: SolverConfig) -> bool:
        """True if this workspace can be reused for ``problem``."""
        lower, upper = _clip_bounds(problem)
        return (
            config == self.config
            and self.P.shape == problem.P.shape
            and self.G.shape == problem.G.shape
            and np.array_equal(self.P, problem.P)
            and np.array_equal(self.G, problem.G)
            and np.array_equal(self.kinds, _constraint_types(lower, upper))
        )

    def _equilibrate(self) -> None:
        """Ruiz equilibration of [[P, G'], [G, 0]] followed by cost scaling."""
        d = self.P.shape[0]
        c = self.G.shape[0]
        scale_d = np.ones(d)
        scale_e = np.ones(c)
        p_s = self.P.copy()
        g_s = self.G.copy()
        for _ in range(self.config.scaling_iter):
            col_p = np.max(np.abs(p_s), axis=0, initial=0.0)
            col_g = np.max(np.abs(g_s), axis=0, initial=0.0)
            norm_d = np.maximum(col_p, col_g)
            norm_e = np.max(np.abs(g_s), axis=1, initial=0.0)
            delta_d = 1.0 / np.sqrt(np.clip(norm_d, _MIN_SCALING, _MAX_SCALING))
            delta_e = 1.0 / np.sqrt(np.clip(norm_e, _MIN_SCALING, _MAX_SCALING))
            delta_d[norm_d < _MIN_SCALING] = 1.0
            delta_e[norm_e < _MIN_SCALING] = 1.0
            p_s = delta_d[:, None] * p_s * delta_d[None, :]
            g_s = delta_e[:, None] * g_s * delta_d[None, :]
            scale_d *= delta_d
            scale_e *= delta_e

        mean_col = float(np.mean(np.max(np.abs(p_s), axis=0, initial=0.0)))
        cost_scale = 1.0 / np.clip(mean_col, _MIN_SCALING, _MAX_SCALING)
        if mean_col < _MIN_SCALING:
            cost_scale = 1.0

        self.D = scale_d
        self.E = scale_e
        self.cost_scale = float(cost_scale)
        self.P_scaled = self.cost_scale * p_s
        self.G_scaled = g_s


def _clip_bounds(problem: QpProblem) -> tuple[FloatArray, FloatArray]:
    return (
        np.clip(problem.b_l, -INFINITY, INFINITY),
        np.clip(problem.b_u, -INFINITY, INFINITY),
    )


def _is_primal_infeasible(
    problem: QpProblem,
    delta_y: FloatArray,
    lower: FloatArray,
    upper: FloatArray,
    eps: float,
) -> bool:
    """Farkas-type certificate from the change of the dual iterate."""
    norm = float(np.max(np.abs(delta_y), initial=0.0))
    if norm <= eps:
        return False
    if np.max(np.abs(problem.G.T @ delta_y), initial=0.0) > eps * norm:
        return False
    pos = np.maximum(delta_y, 0.0)
    neg = np.minimum(delta_y, 0.0)
    upper_term = np.where(pos > 0, upper * pos, 0.0)
    lower_term = np.where(neg < 0, lower * neg, 0.0)
    return float(np.sum(upper_term) + np.sum(lower_term)) < -eps * norm


def _polish(
    problem: QpProblem,
    x: FloatArray,
    z: FloatArray,
    y: FloatArray,
    lower: FloatArray,
    upper: FloatArray,
    config: SolverConfig,
) -> tuple[FloatArray, FloatArray] | None:
    """Solve the equality-constrained QP on the guessed active set.

    Returns the polished (x, y) if it satisfies the KKT conditions within
    tolerance, including dual sign feasibility, otherwise None.
    """
    d = problem.d
    upp = upper - z < y
    low = (z - lower < -y) & ~upp
    active_upp = np.flatnonzero(upp)
    active_low = np.flatnonzero(low)
    rows = np.concatenate([active_low, active_upp])
    g_red = problem.G[rows]
    rhs = np.concatenate([-problem.q, lower[active_low], upper[active_upp]])

    n_act = rows.shape[0]
    kkt = np.zeros((d + n_act, d + n_act))
    kkt[:d, :d] = problem.P
    kkt[:d, d:] = g_red.T
    kkt[d:, :d] = g_red
    regularized = kkt.copy()
    regularized[:d, :d] += config.polish_delta * np.eye(d)
    regularized[d:, d:] -= config.polish_delta * np.eye(n_act)
    try:
        lu = scipy.linalg.lu_factor(regularized, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        return None
    sol = scipy.linalg.lu_solve(lu, rhs)
    for _ in range(config.polish_refine_iter):
        sol = sol + scipy.linalg.lu_solve(lu, rhs - kkt @ sol)
    if not np.all(np.isfinite(sol)):
        return None

    x_pol = sol[:d]
    y_pol = np.zeros(problem.c)
    y_pol[rows] = sol[d:]

    primal, dual = kkt_residuals(problem, x_pol, y_pol)
    tol = config.eps_abs
    is_equality = np.abs(upper - lower) < 1e-12 * np.maximum(1.0, np.abs(upper))
    wrong_sign = (y_pol[active_low] > tol) & ~is_equality[active_low]
    wrong_sign_upp = (y_pol[active_upp] < -tol) & ~is_equality[active_upp]
    if primal > tol or dual > tol or wrong_sign.any() or wrong_sign_upp.any():
        return None
    return x_pol, y_pol


def solve(
    problem: QpProblem,
    config: SolverConfig | None = None,
    warm_start: ArrayLike | None = None,
    *,
    warm_dual: ArrayLike | None = None,
    workspace: QpWorkspace | None = None,
) -> QpSolution:
    """Solve a QP with ADMM.

    Args:
        problem: QP data (P is trusted to be positive semidefinite)
        config: Solver settings; defaults to :class:`SolverConfig`
        warm_start: Initial primal iterate
        warm_dual: Initial multipliers
        workspace: Cached scaling/factorization, rebuilt if it does not match

    Returns:
        Solution with status SOLVED, MAX_ITER (best iterate) or INFEASIBLE
    """
    cfg = config or SolverConfig()
    lower, upper = _clip_bounds(problem)
    d, c = problem.d, problem.c

    if np.any(lower > upper):
        logger.debug("QP bounds cross; reporting infeasible")
        return QpSolution(
            x=np.zeros(d),
            y=np.zeros(c),
            status=SolveStatus.INFEASIBLE,
            primal_residual=float(np.max(lower - upper)),
            dual_residual=float("inf"),
            iterations=0,
            objective=float("inf"),
        )

    ws = workspace
    if ws is None or not ws.matches(problem, cfg):
        ws = QpWorkspace.for_problem(problem, cfg)

    # Scaled data: P_s = c D P D, q_s = c D q, G_s = E G D, bounds E b.
    q_s = ws.cost_scale * ws.D * problem.q
    lower_s = np.where(lower <= -INFINITY, -INFINITY, ws.E * lower)
    upper_s = np.where(upper >= INFINITY, INFINITY, ws.E * upper)
    g_s = ws.G_scaled
    rho = ws.rho
    sigma, alpha = cfg.sigma, cfg.alpha

    x_s = np.zeros(d) if warm_start is None else as_vector(warm_start, d) / ws.D
    z_s = np.clip(g_s @ x_s, lower_s, upper_s)
    y_s = (
        np.zeros(c)
        if warm_dual is None
        else ws.cost_scale * as_vector(warm_dual, c) / ws.E
    )

    def unscale(
        xs: FloatArray, zs: FloatArray, ys: FloatArray
    ) -> tuple[FloatArray, FloatArray, FloatArray]:
        return ws.D * xs, zs / ws.E, ws.E * ys / ws.cost_scale

    best: tuple[float, FloatArray, FloatArray] | None = None
    status = SolveStatus.MAX_ITER
    iteration = 0
    y_prev = y_s.copy()

    for iteration in range(1, cfg.max_iter + 1):
        rhs = sigma * x_s - q_s + g_s.T @ (rho * z_s - y_s)
        x_tilde = scipy.linalg.cho_solve(ws.factor, rhs)
        z_tilde = g_s @ x_tilde
        x_s = alpha * x_tilde + (1.0 - alpha) * x_s
        z_relaxed = alpha * z_tilde + (1.0 - alpha) * z_s
        z_next = np.clip(z_relaxed + y_s / rho, lower_s, upper_s)
        y_s = y_s + rho * (z_relaxed - z_next)
        z_s = z_next

        if iteration % cfg.check_interval != 0 and iteration != cfg.max_iter:
            continue

        x, z, y = unscale(x_s, z_s, y_s)
        primal = float(np.max(np.abs(problem.G @ x - z), initial=0.0))
        _, dual = kkt_residuals(problem, x, y)
        scale_pri = max(
            float(np.max(np.abs(problem.G @ x), initial=0.0)),
            float(np.max(np.abs(z), initial=0.0)),
        )
        scale_dua = max(
            float(np.max(np.abs(problem.P @ x), initial=0.0)),
            float(np.max(np.abs(problem.G.T @ y), initial=0.0)),
            float(np.max(np.abs(problem.q), initial=0.0)),
        )
        eps_pri = cfg.eps_abs + cfg.eps_rel * scale_pri
        eps_dua = cfg.eps_abs + cfg.eps_rel * scale_dua

        residual = max(primal, dual)
        if best is None or residual < best[0]:
            best = (residual, x, y)

        if cfg.polish:
            polished = _polish(problem, x, z, y, lower, upper, cfg)
            if polished is not None:
                return _finish(problem, *polished, SolveStatus.SOLVED, iteration, True)

        if primal <= eps_pri and dual <= eps_dua:
            status = SolveStatus.SOLVED
            best = (residual, x, y)
            break

        if c > 0:
            delta_y = (ws.E * (y_s - y_prev)) / ws.cost_scale
            infeasible = _is_primal_infeasible(
                problem, delta_y, lower, upper, cfg.eps_infeasible
            )
            if infeasible:
                return QpSolution(
                    x=x,
                    y=y,
                    status=SolveStatus.INFEASIBLE,
                    primal_residual=primal,
                    dual_residual=dual,
                    iterations=iteration,
                    objective=float("inf"),
                )
        y_prev = y_s.copy()

    if best is None:
        raise NumericalError("ADMM finished without a residual check")
    _, x, y = best
    if status is SolveStatus.MAX_ITER:
        logger.debug("ADMM reached max_iter=%d", cfg.max_iter)
    return _finish(problem, x, y, status, iteration, False)


def _finish(
    problem: QpProblem,
    x: FloatArray,
    y: FloatArray,
    status: SolveStatus,
    iterations: int,
    polished: bool,
) -> QpSolution:
    primal, dual = kkt_residuals(problem, x, y)
    return QpSolution(
        x=x,
        y=y,
        status=status,
        primal_residual=primal,
        dual_residual=dual,
        iterations=iterations,
        objective=problem.objective(x),
        polished=polished,
    )
