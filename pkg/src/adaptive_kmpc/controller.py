"""Adaptive and static Koopman MPC episodes.

An episode first fills the trajectory buffer with a preceding experiment,
then runs the receding-horizon loop: identify (every cycle when adaptive, once
when static), condense and solve the delta-u QP, apply the first increment and
record the measured sample back into the buffer until the goal is reached.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.typing import ArrayLike

from .arrays import FloatArray, as_vector
from .baselines import ReferenceTrajectory, linearization_mpc_step
from .buffer import (
    DEFAULT_CAPACITY,
    MIN_RESAMPLE_SAMPLES,
    Sample,
    TrajectoryBuffer,
)
from .dictionary import (
    LiftingDictionary,
    lifted_weights,
    make_identity_dictionary,
    make_robot_dictionary,
)
from .edmd import DEFAULT_REL_TOL, KoopmanModel, fit_from_buffer
from .errors import (
    ConfigurationError,
    ControllerError,
    IdentificationError,
    InputError,
    NumericalError,
)
from .mpc_core import MpcConfig, MpcDiagnostics, mpc_step
from .plant_sim import ClockSpec, Plant, PlantParams, PlantState
from .qp_solver import QpWorkspace, SolverConfig, SolveStatus

logger = logging.getLogger(__name__)

EXCURSION_LIMIT = 0.75 * math.pi
GOAL_TOL_ANGLE = 0.05
GOAL_TOL_VELOCITY = 0.1

# Random streams drawn from the scenario seed.
PRECEDING_STREAM = 0
EPISODE_STREAM = 1


class ControllerMode(Enum):
    """Which controller drives the episode."""

    ADAPTIVE = "adaptive"
    STATIC = "static"
    LINEARIZATION = "linearization"


class PrecedingKind(Enum):
    """How the buffer is filled before tracking."""

    SINUSOIDAL_OPEN_LOOP = "sinusoidal_open_loop"
    LINEARIZATION_TRACKING = "linearization_tracking"


@dataclass(frozen=True, eq=False)
class PrecedingExperiment:
    """Data collection before tracking.

    The sinusoidal kind applies ``amplitude * sin(2 pi frequency t + phase)``
    per joint; the tracking kind follows the scenario reference with
    linearization MPC.
    """

    kind: PrecedingKind
    duration: float
    amplitude: FloatArray = field(default_factory=lambda: np.zeros(1))
    frequency: float = 0.5
    phase: FloatArray = field(default_factory=lambda: np.zeros(1))
    excursion_limit: float = EXCURSION_LIMIT

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise ConfigurationError(
                f"Preceding experiment duration must be positive, got {self.duration}"
            )
        if self.frequency < 0:
            raise ConfigurationError(
                f"Frequency must be non-negative, got {self.frequency}"
            )

    def torque(self, t: float, dof: int) -> FloatArray:
        """Open-loop excitation torque at time t since the experiment started."""
        amplitude = np.resize(self.amplitude, dof)
        phase = np.resize(self.phase, dof)
        return amplitude * np.sin(2.0 * math.pi * self.frequency * t + phase)


@dataclass(frozen=True, eq=False)
class MpcSettings:
    """Controller-independent MPC tuning in plain state coordinates.

    ``state_weights`` has one entry per state coordinate, or two entries
    (angle weight, velocity weight) applied to every joint.
    """

    horizon: int = 30
    state_weights: FloatArray = field(default_factory=lambda: np.array([10.0, 0.1]))
    nonlinear_weight: float = 0.0
    control_weights: FloatArray = field(default_factory=lambda: np.array([0.1]))
    u_max: float | None = None

    def config(self, dictionary: LiftingDictionary, torque_limit: float) -> MpcConfig:
        """MPC config with weights lifted through ``dictionary``."""
        limit = torque_limit if self.u_max is None else min(self.u_max, torque_limit)
        m = dictionary.n // 2
        bound = np.full(m, limit)
        weights = self.state_weights
        if weights.shape[0] == 2 and dictionary.n != 2:
            weights = np.repeat(weights, m)
        return MpcConfig.build(
            H=self.horizon,
            Q=lifted_weights(dictionary, weights, self.nonlinear_weight),
            R=np.resize(self.control_weights, m),
            u_l=-bound,
            u_u=bound,
        )


@dataclass(frozen=True)
class ControllerSettings:
    """Episode options shared by all modes."""

    buffer_capacity: int = DEFAULT_CAPACITY
    refit_every: int = 1
    goal_tol_angle: float = GOAL_TOL_ANGLE
    goal_tol_velocity: float = GOAL_TOL_VELOCITY
    rel_tol: float = DEFAULT_REL_TOL
    ridge: float = 0.0
    snapshot_every: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self) -> None:
        if self.buffer_capacity < MIN_RESAMPLE_SAMPLES:
            raise ConfigurationError(
                f"buffer_capacity must be at least {MIN_RESAMPLE_SAMPLES}, "
                f"got {self.buffer_capacity}"
            )
        if self.refit_every < 1:
            raise ConfigurationError(
                f"refit_every must be at least 1, got {self.refit_every}"
            )
        if self.snapshot_every < 0:
            raise ConfigurationError("snapshot_every must be non-negative")


@dataclass(frozen=True, eq=False)
class CycleRecord:
    """Everything measured and decided in one control cycle."""

    t: float
    x: FloatArray
    u: FloatArray
    ref: FloatArray
    refit: bool
    solver_iters: int
    objective: float
    status: SolveStatus
    primal_residual: float
    dual_residual: float
    solve_time: float
    refit_time: float


@dataclass(frozen=True, eq=False)
class ModelSnapshot:
    """Identified model at a given cycle."""

    cycle: int
    t: float
    model: KoopmanModel


@dataclass
class EpisodeLog:
    """Per-cycle record of an episode, possibly cut short by an abort."""

    mode: ControllerMode
    records: list[CycleRecord] = field(default_factory=list)
    goal_time: float | None = None
    aborted: bool = False
    abort_reason: str | None = None
    snapshots: list[ModelSnapshot] = field(default_factory=list)
    buffer: tuple[Sample, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    @property
    def times(self) -> FloatArray:
        return np.array([r.t for r in self.records], dtype=float)

    @property
    def states(self) -> FloatArray:
        """States as (n, N)."""
        return np.column_stack([r.x for r in self.records])

    @property
    def controls(self) -> FloatArray:
        """Applied motor torques as (m, N)."""
        return np.column_stack([r.u for r in self.records])

    @property
    def references(self) -> FloatArray:
        """Reference states at the cycle times as (n, N)."""
        return np.column_stack([r.ref for r in self.records])

    @property
    def refit_count(self) -> int:
        return sum(1 for r in self.records if r.refit)


def goal_reached(
    x: ArrayLike,
    xf: ArrayLike,
    tol_angle: float = GOAL_TOL_ANGLE,
    tol_vel: float = GOAL_TOL_VELOCITY,
) -> bool:
    """Check the stop-update criterion.

    True iff every joint angle is within ``tol_angle`` of the goal angle and
    every joint velocity is below ``tol_vel`` in magnitude.
    """
    state = as_vector(x, name="x")
    goal = as_vector(xf, state.shape[0], name="xf")
    dof = state.shape[0] // 2
    angle_ok = np.all(np.abs(state[:dof] - goal[:dof]) < tol_angle)
    velocity_ok = np.all(np.abs(state[dof:]) < tol_vel)
    return bool(angle_ok and velocity_ok)


def _shift_warm_start(delta_u: FloatArray, m: int) -> FloatArray:
    return np.concatenate([delta_u[m:], np.zeros(m)])


def _reference_window(
    reference: ReferenceTrajectory, t: float, dt: float, horizon: int
) -> FloatArray:
    """Reference states r(t + j dt) for j = 1..horizon, held past the end."""
    return reference.states_at(t + dt * np.arange(1, horizon + 1))


def run_preceding_experiment(
    pe: PrecedingExperiment,
    plant: Plant,
    buffer: TrajectoryBuffer,
    clock: ClockSpec,
    *,
    reference: ReferenceTrajectory | None = None,
    mpc: MpcSettings | None = None,
    nominal: PlantParams | None = None,
    solver: SolverConfig | None = None,
) -> TrajectoryBuffer:
    """Fill ``buffer`` with data recorded before tracking starts at t = 0.

    Samples carry negative timestamps so the episode continues the buffer's
    time axis. Recording lasts ``pe.duration`` and at least until the buffer
    is full. The sinusoidal kind leaves the plant where the excitation ended;
    the tracking kind resets it to the reference start afterwards.

    Args:
        pe: Experiment definition
        plant: Simulated plant, positioned at its start state
        buffer: Empty buffer to fill
        clock: Control clock
        reference: Trajectory tracked by the linearization kind
        mpc: MPC tuning for the linearization kind
        nominal: Model parameters assumed by the linearization kind
        solver: QP settings

    Returns:
        The filled buffer

    Raises:
        InputError: If the buffer is not empty
        ConfigurationError: If the tracking kind lacks a reference or tuning
    """
    if len(buffer):
        raise InputError("Preceding experiment needs an empty buffer")
    tracking = pe.kind is PrecedingKind.LINEARIZATION_TRACKING
    if tracking and (reference is None or mpc is None):
        raise ConfigurationError("Tracking preceding experiment needs a reference")

    dof = plant.params.dof
    n_samples = max(math.ceil(pe.duration * clock.mean_hz - 1e-9), buffer.capacity)
    local = clock.timestamps(n_samples + 1, 0.0, PRECEDING_STREAM)
    stamps = local - local[-1]
    plant.reset(PlantState(q=plant.state.q, qdot=plant.state.qdot, t=float(stamps[0])))

    model_params = nominal or plant.params
    config = (
        mpc.config(make_identity_dictionary(2 * dof), plant.params.torque_limit)
        if mpc is not None
        else None
    )
    u_prev = np.zeros(dof)
    warm: FloatArray | None = None
    excursion = 0.0

    for k in range(n_samples):
        x = plant.x
        if tracking and reference is not None and config is not None:
            window = _reference_window(reference, local[k], clock.period, config.H)
            u, diag = linearization_mpc_step(
                model_params,
                config,
                x,
                u_prev,
                window,
                clock.period,
                warm,
                solver_config=solver,
            )
            warm = _shift_warm_start(diag.delta_u, dof)
        else:
            u = pe.torque(local[k], dof)
        u_prev = plant.apply(u, float(stamps[k + 1]))
        buffer.push(Sample.of(stamps[k], x, u_prev))
        excursion = max(excursion, float(np.max(np.abs(plant.x[:dof]))))

    if not tracking and excursion > pe.excursion_limit:
        logger.warning(
            "Preceding excitation reached %.3f rad, beyond the %.3f rad bound",
            excursion,
            pe.excursion_limit,
        )
    if tracking and reference is not None:
        plant.reset(PlantState.from_vector(reference.initial_state, 0.0))
    logger.info(
        "Preceding experiment (%s) recorded %d samples", pe.kind.value, len(buffer)
    )
    return buffer


def control_episode(
    mode: ControllerMode,
    plant: Plant,
    reference: ReferenceTrajectory,
    mpc: MpcSettings,
    pe: PrecedingExperiment | None,
    clock: ClockSpec,
    settings: ControllerSettings | None = None,
    *,
    nominal: PlantParams | None = None,
    duration: float | None = None,
) -> EpisodeLog:
    """Run one tracking episode.

    Koopman modes run the preceding experiment first. Adaptive mode refits
    every ``refit_every`` cycles from the buffer and pushes each measured
    sample back until the goal is reached; static mode fits once at k = 0;
    linearization mode relinearizes the nominal model every cycle.

    Args:
        mode: Controller to run
        plant: Simulated plant at the reference start state
        reference: Trajectory to track; its last state is the goal
        mpc: MPC tuning
        pe: Preceding experiment (required by the Koopman modes)
        clock: Control clock
        settings: Episode options
        nominal: Parameters assumed by linearization MPC (defaults to the
            plant's own)
        duration: Episode length, default 1.5 times the reference duration

    Returns:
        Per-cycle log; ``aborted`` is set if the QP became infeasible, the
        plant diverged or identification failed
    """
    opts = settings or ControllerSettings()
    dof = plant.params.dof
    limit = plant.params.torque_limit
    end = 1.5 * reference.duration if duration is None else duration
    goal = reference.final_state
    koopman = mode is not ControllerMode.LINEARIZATION
    model_params = nominal or plant.params
    log = EpisodeLog(mode=mode)

    buffer = TrajectoryBuffer(opts.buffer_capacity)
    dictionary = make_robot_dictionary(dof)
    u_prev = np.zeros(dof)
    if koopman:
        if pe is None:
            raise ConfigurationError(f"{mode.value} mode needs a preceding experiment")
        run_preceding_experiment(
            pe,
            plant,
            buffer,
            clock,
            reference=reference,
            mpc=mpc,
            nominal=model_params,
            solver=opts.solver,
        )
        if pe.kind is PrecedingKind.SINUSOIDAL_OPEN_LOOP:
            u_prev = buffer.snapshot()[-1].u.copy()
        config = mpc.config(dictionary, limit)
    else:
        config = mpc.config(make_identity_dictionary(2 * dof), limit)

    stamps = clock.until(end, 0.0, EPISODE_STREAM)
    plant.reset(PlantState(q=plant.state.q, qdot=plant.state.qdot, t=0.0))

    model: KoopmanModel | None = None
    workspace: QpWorkspace | None = None
    warm: FloatArray | None = None

    for k in range(stamps.shape[0] - 1):
        t = float(stamps[k])
        x = plant.x
        refit = False
        refit_time = 0.0
        try:
            if koopman and (
                model is None
                or (mode is ControllerMode.ADAPTIVE and k % opts.refit_every == 0)
            ):
                started = time.perf_counter()
                model = fit_from_buffer(
                    buffer, dictionary, rel_tol=opts.rel_tol, ridge=opts.ridge
                )
                refit_time = time.perf_counter() - started
                refit = True
                if mode is ControllerMode.ADAPTIVE:
                    workspace = None

            started = time.perf_counter()
            diag: MpcDiagnostics
            if koopman and model is not None:
                window = _reference_window(reference, t, model.dt, config.H)
                u, diag = mpc_step(
                    model,
                    config,
                    x,
                    u_prev,
                    window,
                    dictionary,
                    warm,
                    solver_config=opts.solver,
                    workspace=workspace,
                )
                if mode is ControllerMode.STATIC:
                    workspace = diag.workspace
            else:
                window = _reference_window(reference, t, clock.period, config.H)
                u, diag = linearization_mpc_step(
                    model_params,
                    config,
                    x,
                    u_prev,
                    window,
                    clock.period,
                    warm,
                    solver_config=opts.solver,
                )
            solve_time = time.perf_counter() - started
            applied = plant.apply(u, float(stamps[k + 1]))
        except (ControllerError, IdentificationError, NumericalError) as exc:
            log.aborted = True
            log.abort_reason = str(exc)
            logger.error("Episode aborted at t=%.3f: %s", t, exc)
            break

        log.records.append(
            CycleRecord(
                t=t,
                x=x,
                u=applied,
                ref=reference.states_at([t])[:, 0],
                refit=refit,
                solver_iters=diag.iterations,
                objective=diag.objective,
                status=diag.status,
                primal_residual=diag.primal_residual,
                dual_residual=diag.dual_residual,
                solve_time=solve_time,
                refit_time=refit_time,
            )
        )
        if (
            model is not None
            and opts.snapshot_every
            and k % opts.snapshot_every == 0
        ):
            log.snapshots.append(ModelSnapshot(cycle=k, t=t, model=model))

        if log.goal_time is None and goal_reached(
            x, goal, opts.goal_tol_angle, opts.goal_tol_velocity
        ):
            log.goal_time = t
            logger.info("Goal reached at t=%.3f s; buffer updates stop", t)
        if mode is ControllerMode.ADAPTIVE and log.goal_time is None:
            buffer.push(Sample.of(t, x, applied))

        u_prev = applied
        warm = _shift_warm_start(diag.delta_u, dof)

    log.buffer = buffer.snapshot()
    logger.info(
        "%s episode: %d cycles, %d refits, goal %s",
        mode.value,
        len(log),
        log.refit_count,
        "not reached" if log.goal_time is None else f"at {log.goal_time:.3f} s",
    )
    return log
