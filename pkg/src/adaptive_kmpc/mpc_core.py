"""Condensed incremental (delta-u) MPC on a linear, possibly lifted, model.

The model z+ = A z + B u (+ w) is augmented with the previous control so the
decision variables are control increments:

    zhat = [z; u_prev],  Ahat = [[A, B], [0, I]],  Bhat = [B; I]

Predicted augmented states over the horizon are stacked as
``Zhat = Apred zhat0 + Bpred dU + offset`` and substituted into the quadratic
tracking cost, leaving a QP in dU only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from numpy.typing import ArrayLike

from .arrays import FloatArray, as_matrix, as_vector, require_finite
from .dictionary import LiftingDictionary
from .errors import ControllerError, InputError
from .qp_solver import (
    QpProblem,
    QpWorkspace,
    SolverConfig,
    SolveStatus,
    solve,
)

logger = logging.getLogger(__name__)


class LinearModel(Protocol):
    """Anything exposing discrete-time ``A`` and ``B`` matrices."""

    @property
    def A(self) -> FloatArray: ...

    @property
    def B(self) -> FloatArray: ...


@dataclass(frozen=True, eq=False)
class MpcConfig:
    """Horizon, diagonal weights and absolute torque bounds."""

    H: int
    Q: FloatArray
    R: FloatArray
    u_l: FloatArray
    u_u: FloatArray

    def __post_init__(self) -> None:
        if self.H < 1:
            raise InputError(f"Horizon must be at least 1, got {self.H}")
        m = self.R.shape[0]
        if self.u_l.shape != (m,) or self.u_u.shape != (m,):
            raise InputError(f"Torque bounds must have length {m}")
        if np.any(self.Q < 0) or np.any(self.R < 0):
            raise InputError("MPC weights must be non-negative")
        if np.any(self.u_l > self.u_u):
            raise InputError("Lower torque bound exceeds upper bound")

    @classmethod
    def build(
        cls,
        H: int,
        Q: ArrayLike,
        R: ArrayLike,
        u_l: ArrayLike,
        u_u: ArrayLike,
    ) -> MpcConfig:
        """Create a config from array-likes."""
        r = as_vector(R, name="R")
        return cls(
            H=int(H),
            Q=as_vector(Q, name="Q"),
            R=r,
            u_l=as_vector(u_l, r.shape[0], name="u_l"),
            u_u=as_vector(u_u, r.shape[0], name="u_u"),
        )

    @property
    def m(self) -> int:
        return int(self.R.shape[0])


@dataclass(frozen=True, eq=False)
class AugmentedModel:
    """Delta-u model zhat+ = Ahat zhat + Bhat du + drift."""

    Ahat: FloatArray
    Bhat: FloatArray
    drift: FloatArray

    @property
    def p(self) -> int:
        """Lifted (un-augmented) dimension."""
        return int(self.Ahat.shape[0] - self.Bhat.shape[1])

    @property
    def m(self) -> int:
        return int(self.Bhat.shape[1])


@dataclass(frozen=True, eq=False)
class PredictionMatrices:
    """Stacked horizon prediction ``Zhat = Apred zhat0 + Bpred dU + offset``."""

    Apred: FloatArray
    Bpred: FloatArray
    offset: FloatArray
    H: int
    p: int
    m: int


@dataclass(frozen=True, eq=False)
class LiftedReference:
    """Columns [Psi(r_k); 0_m] for the H predicted steps."""

    r: FloatArray

    @classmethod
    def from_states(
        cls, dictionary: LiftingDictionary, ref_window: ArrayLike, m: int
    ) -> LiftedReference:
        """Lift a (n, H) window of reference states."""
        window = as_matrix(ref_window, rows=dictionary.n, name="reference window")
        lifted = dictionary.lift_matrix(window)
        return cls(r=np.vstack([lifted, np.zeros((m, window.shape[1]))]))

    @property
    def H(self) -> int:
        return int(self.r.shape[1])


@dataclass(frozen=True, eq=False)
class MpcDiagnostics:
    """Per-cycle solver information."""

    objective: float
    iterations: int
    primal_residual: float
    dual_residual: float
    status: SolveStatus
    polished: bool
    delta_u: FloatArray
    workspace: QpWorkspace

    @property
    def flagged(self) -> bool:
        """True when the solver stopped at its iteration cap."""
        return self.status is SolveStatus.MAX_ITER


def augment(model: LinearModel) -> AugmentedModel:
    """Build the delta-u augmented model.

    Models with an affine ``drift`` attribute (a constant added to every
    step) carry it into the first p augmented coordinates.

    Args:
        model: Discrete-time linear model with A (p x p) and B (p x m)

    Returns:
        Ahat = [[A, B], [0, I_m]], Bhat = [B; I_m]
    """
    a = as_matrix(model.A, name="A")
    p = a.shape[0]
    b = as_matrix(model.B, rows=p, name="B")
    m = b.shape[1]

    ahat = np.zeros((p + m, p + m))
    ahat[:p, :p] = a
    ahat[:p, p:] = b
    ahat[p:, p:] = np.eye(m)
    bhat = np.vstack([b, np.eye(m)])

    drift = np.zeros(p + m)
    model_drift = getattr(model, "drift", None)
    if model_drift is not None:
        drift[:p] = as_vector(model_drift, p, name="drift")
    return AugmentedModel(Ahat=ahat, Bhat=bhat, drift=drift)


def prediction_matrices(am: AugmentedModel, H: int) -> PredictionMatrices:
    """Stack the H-step prediction by forward iteration.

    Block i of ``Apred`` is Ahat^(i+1); block (i, j) of ``Bpred`` is
    Ahat^(i-j) Bhat for i >= j and zero above the diagonal.
    """
    if H < 1:
        raise InputError(f"Horizon must be at least 1, got {H}")
    na = am.Ahat.shape[0]
    m = am.m

    apred = np.zeros((H * na, na))
    bpred = np.zeros((H * na, H * m))
    offset = np.zeros(H * na)

    power = am.Ahat.copy()
    impulse = am.Bhat.copy()
    accumulated = am.drift.copy()
    for i in range(H):
        rows = slice(i * na, (i + 1) * na)
        apred[rows] = power
        offset[rows] = accumulated
        # impulse = Ahat^i Bhat fills the i-th subdiagonal
        for j in range(H - i):
            bpred[(i + j) * na : (i + j + 1) * na, j * m : (j + 1) * m] = impulse
        power = am.Ahat @ power
        impulse = am.Ahat @ impulse
        accumulated = am.Ahat @ accumulated + am.drift

    return PredictionMatrices(Apred=apred, Bpred=bpred, offset=offset, H=H, p=am.p, m=m)


def increment_constraints(H: int, m: int) -> FloatArray:
    """C_delta = L1 kron I_m, mapping increments to cumulative control changes."""
    return np.kron(np.tril(np.ones((H, H))), np.eye(m))


def _free_response(
    pm: PredictionMatrices, zhat0: FloatArray, ref: LiftedReference
) -> FloatArray:
    """Predicted tracking deviation with zero increments, Apred zhat0 + c - r."""
    return pm.Apred @ zhat0 + pm.offset - ref.r.reshape(-1, order="F")


def _state_weights(pm: PredictionMatrices, cfg: MpcConfig) -> FloatArray:
    return np.tile(np.concatenate([cfg.Q, np.zeros(pm.m)]), pm.H)


def condense(
    pm: PredictionMatrices,
    cfg: MpcConfig,
    zhat0: ArrayLike,
    ref: LiftedReference,
    u_prev: ArrayLike,
) -> QpProblem:
    """Condensed QP in the stacked increments dU.

    Args:
        pm: Horizon prediction matrices
        cfg: Weights and bounds; Q must have length p and R length m
        zhat0: Current augmented state [Psi(x0); u_prev]
        ref: Lifted reference for the H predicted steps
        u_prev: Control applied in the previous cycle

    Returns:
        QP with P = 2(Bpred' Qbar Bpred + Rbar),
        q = 2 Bpred' Qbar (Apred zhat0 + c - r), G = C_delta and bounds
        shifted by u_prev

    Raises:
        InputError: On any dimension mismatch
    """
    na = pm.p + pm.m
    z0 = as_vector(zhat0, na, name="augmented state")
    u0 = as_vector(u_prev, pm.m, name="u_prev")
    if cfg.H != pm.H or ref.H != pm.H:
        raise InputError(
            f"Horizon mismatch: config {cfg.H}, predictions {pm.H}, reference {ref.H}"
        )
    if cfg.Q.shape[0] != pm.p or cfg.m != pm.m:
        raise InputError(
            f"Weights sized for p={cfg.Q.shape[0]}, m={cfg.m}; model has "
            f"p={pm.p}, m={pm.m}"
        )
    if ref.r.shape[0] != na:
        raise InputError(f"Lifted reference must have {na} rows")

    q_bar = _state_weights(pm, cfg)
    r_bar = np.tile(cfg.R, pm.H)
    weighted = q_bar[:, None] * pm.Bpred
    hessian = 2.0 * (pm.Bpred.T @ weighted + np.diag(r_bar))
    hessian = 0.5 * (hessian + hessian.T)
    linear = 2.0 * weighted.T @ _free_response(pm, z0, ref)

    return QpProblem(
        P=hessian,
        q=linear,
        G=increment_constraints(pm.H, pm.m),
        b_l=np.tile(cfg.u_l - u0, pm.H),
        b_u=np.tile(cfg.u_u - u0, pm.H),
    )


def tracking_cost(
    pm: PredictionMatrices,
    cfg: MpcConfig,
    zhat0: ArrayLike,
    ref: LiftedReference,
    delta_u: ArrayLike,
) -> float:
    """Evaluate sum_i e_i' Q e_i + du_i' R du_i for a given increment sequence."""
    z0 = as_vector(zhat0, pm.p + pm.m, name="augmented state")
    du = as_vector(delta_u, pm.H * pm.m, name="delta_u")
    error = _free_response(pm, z0, ref) + pm.Bpred @ du
    return float(
        error @ (_state_weights(pm, cfg) * error) + du @ (np.tile(cfg.R, pm.H) * du)
    )


def pad_window(window: ArrayLike, H: int) -> FloatArray:
    """Trim or extend a reference window to H columns, holding the last one."""
    ref = as_matrix(window, name="reference window")
    if ref.shape[1] == 0:
        raise InputError("Reference window is empty")
    if ref.shape[1] >= H:
        return ref[:, :H]
    hold = np.repeat(ref[:, -1:], H - ref.shape[1], axis=1)
    return np.hstack([ref, hold])


def mpc_step(
    model: LinearModel,
    cfg: MpcConfig,
    x0: ArrayLike,
    u_prev: ArrayLike,
    ref_window: ArrayLike,
    dictionary: LiftingDictionary,
    warm: ArrayLike | None = None,
    *,
    solver_config: SolverConfig | None = None,
    workspace: QpWorkspace | None = None,
) -> tuple[FloatArray, MpcDiagnostics]:
    """One receding-horizon step.

    Args:
        model: Lifted model (A is p x p with p = dictionary.p)
        cfg: MPC settings
        x0: Current measured state
        u_prev: Control applied in the previous cycle
        ref_window: Un-lifted references r_{k+1..k+H}; shorter windows are
            padded by holding the final column
        dictionary: Lifting shared by model and reference
        warm: Initial increment sequence for the solver
        solver_config: QP settings
        workspace: Cached QP factorization, reused when P is unchanged

    Returns:
        (u_prev + du_0, diagnostics)

    Raises:
        ControllerError: If the QP is infeasible
    """
    x = as_vector(x0, dictionary.n, name="x0")
    u0 = as_vector(u_prev, cfg.m, name="u_prev")
    require_finite(x, "x0")

    am = augment(model)
    if am.p != dictionary.p:
        raise InputError(
            f"Model dimension {am.p} does not match dictionary dimension {dictionary.p}"
        )
    pm = prediction_matrices(am, cfg.H)
    zhat0 = np.concatenate([dictionary.lift(x), u0])
    ref = LiftedReference.from_states(dictionary, pad_window(ref_window, cfg.H), cfg.m)
    problem = condense(pm, cfg, zhat0, ref, u0)

    solver_cfg = solver_config or SolverConfig()
    if workspace is None or not workspace.matches(problem, solver_cfg):
        workspace = QpWorkspace.for_problem(problem, solver_cfg)
    solution = solve(problem, solver_cfg, warm, workspace=workspace)

    if solution.status is SolveStatus.INFEASIBLE:
        raise ControllerError("MPC problem is infeasible")
    if solution.status is SolveStatus.MAX_ITER:
        logger.warning(
            "QP stopped at the iteration cap (primal %.2e, dual %.2e)",
            solution.primal_residual,
            solution.dual_residual,
        )

    u_applied = np.clip(u0 + solution.x[: cfg.m], cfg.u_l, cfg.u_u)
    diagnostics = MpcDiagnostics(
        objective=tracking_cost(pm, cfg, zhat0, ref, solution.x),
        iterations=solution.iterations,
        primal_residual=solution.primal_residual,
        dual_residual=solution.dual_residual,
        status=solution.status,
        polished=solution.polished,
        delta_u=solution.x,
        workspace=workspace,
    )
    logger.debug(
        "MPC step: du0=%s, %d iterations, objective %.6g",
        solution.x[: cfg.m],
        solution.iterations,
        diagnostics.objective,
    )
    return u_applied, diagnostics
