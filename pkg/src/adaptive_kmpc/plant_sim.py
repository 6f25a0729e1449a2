"""Rigid-body simulation of planar 1R and 2R arms.

Joint angles are measured from the hanging equilibrium (theta = 0 points down,
theta = pi is upright). Motor torques reach the joints through a belt
transmission, u_motor = S u_joint. The equations of motion

    M(q) qdd + C(q, qd) + G(q) = S^-1 u_motor + d_ext - b qd

are integrated with classical fourth-order Runge-Kutta, with motor torques held
constant between control cycles.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any

import numpy as np
from numpy.typing import ArrayLike

from .arrays import FloatArray, as_matrix, as_vector
from .errors import ConfigurationError, InputError, NumericalError

logger = logging.getLogger(__name__)

DEFAULT_LINK_MASS = 0.6
DEFAULT_LINK_LENGTH = 0.3
DEFAULT_FRICTION = 0.05
DEFAULT_TORQUE_LIMIT = 6.0
GRAVITY = 9.81
DEFAULT_DT_SIM = 1e-3

# Relative jitter band of the control frequency (90-110 Hz around 100 Hz).
JITTER_BAND = (0.9, 1.1)


def default_structure_matrix(dof: int) -> FloatArray:
    """Belt transmission matrix: identity for 1R, [[1, -1], [0, 1]] for 2R."""
    if dof == 1:
        return np.eye(1)
    if dof == 2:
        return np.array([[1.0, -1.0], [0.0, 1.0]])
    raise ConfigurationError(f"Unsupported joint count {dof}")


def _per_link(
    value: ArrayLike | None, default: ArrayLike, dof: int, name: str
) -> FloatArray:
    source = default if value is None else value
    arr = np.asarray(source, dtype=float)
    if arr.ndim == 0:
        return np.full(dof, float(arr))
    return as_vector(arr, dof, name=name).copy()


@dataclass(frozen=True, eq=False)
class PlantParams:
    """Physical parameters of a planar serial arm.

    Attributes:
        mass: Link masses (kg)
        length: Link lengths (m)
        com: Distance from each joint to its link's center of mass (m)
        inertia: Link inertias about their centers of mass (kg m^2)
        friction: Viscous joint friction (N m s/rad)
        gravity: Gravitational acceleration (m/s^2)
        structure: Motor-from-joint torque map S
        torque_limit: Symmetric motor torque bound (N m)
        payload: Point mass at the end effector (kg)
    """

    mass: FloatArray
    length: FloatArray
    com: FloatArray
    inertia: FloatArray
    friction: FloatArray
    gravity: float = GRAVITY
    structure: FloatArray = field(default_factory=lambda: np.eye(1))
    torque_limit: float = DEFAULT_TORQUE_LIMIT
    payload: float = 0.0

    def __post_init__(self) -> None:
        dof = self.mass.shape[0]
        if dof not in (1, 2):
            raise ConfigurationError(f"Unsupported joint count {dof}")
        for name in ("length", "com", "inertia", "friction"):
            if getattr(self, name).shape != (dof,):
                raise ConfigurationError(f"{name} must have {dof} entries")
        if self.structure.shape != (dof, dof):
            raise ConfigurationError(f"Structure matrix must be {dof}x{dof}")
        if np.any(self.mass <= 0) or np.any(self.length <= 0):
            raise ConfigurationError("Link masses and lengths must be positive")
        if np.any(self.inertia < 0) or np.any(self.friction < 0):
            raise ConfigurationError("Inertias and friction must be non-negative")
        if self.torque_limit <= 0:
            raise ConfigurationError(
                f"Torque limit must be positive, got {self.torque_limit}"
            )
        if self.payload < 0:
            raise ConfigurationError(
                f"Payload must be non-negative, got {self.payload}"
            )
        if abs(np.linalg.det(self.structure)) < 1e-12:
            raise ConfigurationError("Structure matrix must be invertible")

    @classmethod
    def build(
        cls,
        dof: int,
        *,
        mass: ArrayLike | None = None,
        length: ArrayLike | None = None,
        com: ArrayLike | None = None,
        inertia: ArrayLike | None = None,
        friction: ArrayLike | None = None,
        gravity: float = GRAVITY,
        structure: ArrayLike | None = None,
        torque_limit: float = DEFAULT_TORQUE_LIMIT,
        payload: float = 0.0,
    ) -> PlantParams:
        """Parameters with defaults filled in.

        Scalars are broadcast to every link. Unspecified centers of mass sit
        at mid-link and unspecified inertias are those of a uniform rod.
        """
        if dof not in (1, 2):
            raise ConfigurationError(f"Unsupported joint count {dof}")
        m = _per_link(mass, DEFAULT_LINK_MASS, dof, "mass")
        length_ = _per_link(length, DEFAULT_LINK_LENGTH, dof, "length")
        com_ = _per_link(com, length_ / 2.0, dof, "com")
        inertia_ = _per_link(inertia, m * length_**2 / 12.0, dof, "inertia")
        friction_ = _per_link(friction, DEFAULT_FRICTION, dof, "friction")
        s = (
            default_structure_matrix(dof)
            if structure is None
            else as_matrix(structure, dof, dof, name="structure")
        )
        return cls(
            mass=m,
            length=length_,
            com=com_,
            inertia=inertia_,
            friction=friction_,
            gravity=float(gravity),
            structure=s,
            torque_limit=float(torque_limit),
            payload=float(payload),
        )

    @property
    def dof(self) -> int:
        """Number of joints."""
        return int(self.mass.shape[0])

    @cached_property
    def structure_inverse(self) -> FloatArray:
        """Joint-from-motor torque map S^-1."""
        return np.asarray(np.linalg.inv(self.structure))

    @cached_property
    def effective_links(self) -> tuple[FloatArray, FloatArray, FloatArray]:
        """Mass, center of mass and inertia with the payload merged in."""
        mass = self.mass.copy()
        com = self.com.copy()
        inertia = self.inertia.copy()
        if self.payload > 0:
            last = self.dof - 1
            total = mass[last] + self.payload
            moment = mass[last] * com[last] + self.payload * self.length[last]
            new_com = moment / total
            inertia[last] += (
                mass[last] * (com[last] - new_com) ** 2
                + self.payload * (self.length[last] - new_com) ** 2
            )
            mass[last] = total
            com[last] = new_com
        return mass, com, inertia

    def with_payload(self, payload: float) -> PlantParams:
        """Copy with a different end-effector payload."""
        return dataclasses.replace(self, payload=float(payload))

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation."""
        return {
            "dof": self.dof,
            "mass": self.mass.tolist(),
            "length": self.length.tolist(),
            "com": self.com.tolist(),
            "inertia": self.inertia.tolist(),
            "friction": self.friction.tolist(),
            "gravity": self.gravity,
            "structure": self.structure.tolist(),
            "torque_limit": self.torque_limit,
            "payload": self.payload,
        }


@dataclass(frozen=True, eq=False)
class PlantState:
    """Joint positions (rad) and velocities (rad/s) at time t."""

    q: FloatArray
    qdot: FloatArray
    t: float = 0.0

    def __post_init__(self) -> None:
        if self.q.shape != self.qdot.shape or self.q.ndim != 1:
            raise InputError("q and qdot must be vectors of equal length")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qdot))):
            raise NumericalError("Plant state is not finite")

    @classmethod
    def from_vector(cls, x: ArrayLike, t: float = 0.0) -> PlantState:
        """Split x = [q; qdot]."""
        vec = as_vector(x, name="state")
        if vec.shape[0] % 2:
            raise InputError(f"State length must be even, got {vec.shape[0]}")
        dof = vec.shape[0] // 2
        return cls(q=vec[:dof].copy(), qdot=vec[dof:].copy(), t=float(t))

    @classmethod
    def at_rest(cls, q: ArrayLike, t: float = 0.0) -> PlantState:
        """State with zero velocity."""
        pos = as_vector(q, name="q").copy()
        return cls(q=pos, qdot=np.zeros_like(pos), t=float(t))

    @property
    def x(self) -> FloatArray:
        """Stacked state [q; qdot]."""
        return np.concatenate([self.q, self.qdot])


class DisturbanceKind(Enum):
    """Kinds of external disturbance."""

    NONE = "none"
    IMPULSE = "impulse"
    CONSTANT_PUSH = "constant_push"
    PAYLOAD_CHANGE = "payload_change"


@dataclass(frozen=True, eq=False)
class Disturbance:
    """External disturbance active on ``[t_start, t_end]``.

    ``impulse`` is a half-sine joint-torque pulse peaking at ``magnitude``,
    ``constant_push`` a rectangular pulse, and ``payload_change`` adds
    ``magnitude[0]`` kg to the end-effector payload inside the window.
    Torque magnitudes shorter than the joint count act on the leading joints.
    """

    kind: DisturbanceKind = DisturbanceKind.NONE
    t_start: float = 0.0
    t_end: float = 0.0
    magnitude: FloatArray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self) -> None:
        if self.t_start > self.t_end:
            raise ConfigurationError(
                f"Disturbance window [{self.t_start}, {self.t_end}] is reversed"
            )
        if not np.all(np.isfinite(self.magnitude)):
            raise ConfigurationError("Disturbance magnitude must be finite")
        if self.kind is DisturbanceKind.PAYLOAD_CHANGE and self.magnitude[0] < 0:
            raise ConfigurationError("Payload change must be non-negative")

    @classmethod
    def none(cls) -> Disturbance:
        """No disturbance."""
        return cls()

    def active(self, t: float) -> bool:
        return self.kind is not DisturbanceKind.NONE and self.t_start <= t <= self.t_end

    def torque(self, t: float, dof: int) -> FloatArray:
        """External joint torque at time t."""
        out = np.zeros(dof)
        if not self.active(t):
            return out
        mag = np.zeros(dof)
        count = min(dof, self.magnitude.shape[0])
        mag[:count] = self.magnitude[:count]
        if self.kind is DisturbanceKind.CONSTANT_PUSH:
            return mag
        if self.kind is DisturbanceKind.IMPULSE:
            width = self.t_end - self.t_start
            if width <= 0:
                return out
            return mag * math.sin(math.pi * (t - self.t_start) / width)
        return out

    def payload(self, t: float) -> float:
        """Extra payload mass at time t."""
        if self.kind is DisturbanceKind.PAYLOAD_CHANGE and self.active(t):
            return float(self.magnitude[0])
        return 0.0


def mass_matrix(params: PlantParams, q: ArrayLike) -> FloatArray:
    """Generalized inertia matrix M(q)."""
    pos = as_vector(q, params.dof, name="q")
    mass, com, inertia = params.effective_links
    if params.dof == 1:
        return np.array([[inertia[0] + mass[0] * com[0] ** 2]])
    m11, m12, m22 = _two_link_inertia(params, np.cos(pos[1]))
    return np.array([[m11, m12], [m12, m22]])


def _two_link_inertia(params: PlantParams, c2: Any) -> tuple[Any, Any, Any]:
    """Entries M11, M12, M22 for cos(q2) = c2 (scalar or array)."""
    mass, com, inertia = params.effective_links
    l1 = params.length[0]
    m22 = inertia[1] + mass[1] * com[1] ** 2
    m12 = m22 + mass[1] * l1 * com[1] * c2
    m11 = (
        inertia[0]
        + mass[0] * com[0] ** 2
        + inertia[1]
        + mass[1] * (l1**2 + com[1] ** 2 + 2.0 * l1 * com[1] * c2)
    )
    return m11, m12, m22


def gravity_torque(params: PlantParams, q: ArrayLike) -> FloatArray:
    """Gravity vector G(q) = dV/dq."""
    pos = np.asarray(q, dtype=float)
    return _gravity(params, pos.reshape(params.dof, -1))[:, 0]


def _gravity(params: PlantParams, q: FloatArray) -> FloatArray:
    mass, com, _ = params.effective_links
    g = params.gravity
    if params.dof == 1:
        return (mass[0] * com[0] * g * np.sin(q[0]))[None, :]
    s1 = np.sin(q[0])
    s12 = np.sin(q[0] + q[1])
    g2 = mass[1] * com[1] * g * s12
    g1 = (mass[0] * com[0] + mass[1] * params.length[0]) * g * s1 + g2
    return np.vstack([g1, g2])


def _accelerations(
    params: PlantParams, q: FloatArray, qd: FloatArray, tau: FloatArray
) -> FloatArray:
    """Batched q_dd for states and net joint torques given column-wise."""
    mass, com, inertia = params.effective_links
    rhs = tau - _gravity(params, q) - params.friction[:, None] * qd
    if params.dof == 1:
        return rhs / (inertia[0] + mass[0] * com[0] ** 2)

    h = mass[1] * params.length[0] * com[1] * np.sin(q[1])
    coriolis1 = -h * (2.0 * qd[0] * qd[1] + qd[1] ** 2)
    coriolis2 = h * qd[0] ** 2
    m11, m12, m22 = _two_link_inertia(params, np.cos(q[1]))
    r1 = rhs[0] - coriolis1
    r2 = rhs[1] - coriolis2
    det = m11 * m22 - m12**2
    return np.vstack([(m22 * r1 - m12 * r2) / det, (m11 * r2 - m12 * r1) / det])


def state_derivative(
    params: PlantParams,
    x: ArrayLike,
    u_motor: ArrayLike,
    d_ext: ArrayLike | None = None,
) -> FloatArray:
    """Time derivative of x = [q; qdot], batched over columns.

    Args:
        params: Plant parameters
        x: State(s), shape (2 dof,) or (2 dof, N)
        u_motor: Motor torque(s), shape (dof,) or (dof, N); not clamped here
        d_ext: External joint torque, shape (dof,)

    Returns:
        Derivative with the same shape as ``x``
    """
    states = np.asarray(x, dtype=float)
    single = states.ndim == 1
    dof = params.dof
    xs = states.reshape(2 * dof, -1)
    us = np.asarray(u_motor, dtype=float).reshape(dof, -1)
    tau = params.structure_inverse @ us
    if d_ext is not None:
        tau = tau + np.asarray(d_ext, dtype=float).reshape(dof, 1)
    qdd = _accelerations(params, xs[:dof], xs[dof:], tau)
    out = np.vstack([xs[dof:], qdd])
    return out[:, 0] if single else out


def forward_dynamics(
    params: PlantParams,
    state: PlantState,
    u_motor: ArrayLike,
    d_ext: ArrayLike | None = None,
) -> FloatArray:
    """Joint accelerations q_dd = M^-1 (S^-1 u + d_ext - C - G - b qd)."""
    u = as_vector(u_motor, params.dof, name="motor torque")
    return state_derivative(params, state.x, u, d_ext)[params.dof :]


def clamp_torque(params: PlantParams, u_motor: ArrayLike) -> FloatArray:
    """Saturate motor torques at the symmetric limit."""
    u = as_vector(u_motor, params.dof, name="motor torque")
    return np.clip(u, -params.torque_limit, params.torque_limit)


def total_energy(params: PlantParams, state: PlantState) -> float:
    """Kinetic plus potential energy, zero at rest in the hanging position."""
    kinetic = 0.5 * state.qdot @ mass_matrix(params, state.q) @ state.qdot
    mass, com, _ = params.effective_links
    g = params.gravity
    q = state.q
    if params.dof == 1:
        potential = mass[0] * g * com[0] * (1.0 - math.cos(q[0]))
    else:
        l1 = params.length[0]
        potential = mass[0] * g * com[0] * (1.0 - math.cos(q[0])) + mass[1] * g * (
            l1 * (1.0 - math.cos(q[0])) + com[1] * (1.0 - math.cos(q[0] + q[1]))
        )
    return float(kinetic + potential)


def rk4(
    derivative: Callable[[float, FloatArray], FloatArray],
    x: FloatArray,
    t: float,
    dt: float,
) -> FloatArray:
    """One classical Runge-Kutta step of x' = derivative(t, x)."""
    k1 = derivative(t, x)
    k2 = derivative(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = derivative(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = derivative(t + dt, x + dt * k3)
    result: FloatArray = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return result


def step(
    params: PlantParams,
    state: PlantState,
    u_motor: ArrayLike,
    dist: Disturbance,
    dt: float,
) -> PlantState:
    """Advance the plant by one RK4 step with the motor torque held constant.

    The torque is clamped to the limit first. The payload of a
    ``payload_change`` disturbance is evaluated at the start of the step;
    torque disturbances are evaluated at every Runge-Kutta stage.

    Raises:
        InputError: If dt is not positive
        NumericalError: If the integration produces non-finite values
    """
    if not dt > 0:
        raise InputError(f"Integration step must be positive, got {dt}")
    u = clamp_torque(params, u_motor)
    extra = dist.payload(state.t)
    p = params.with_payload(params.payload + extra) if extra > 0 else params

    def derivative(t: float, x: FloatArray) -> FloatArray:
        return state_derivative(p, x, u, dist.torque(t, p.dof))

    x_next = rk4(derivative, state.x, state.t, dt)
    if not np.all(np.isfinite(x_next)):
        raise NumericalError(f"Plant integration diverged at t={state.t:.4f}")
    return PlantState.from_vector(x_next, state.t + dt)


def advance(
    params: PlantParams,
    state: PlantState,
    u_motor: ArrayLike,
    dist: Disturbance,
    t_next: float,
    dt_sim: float = DEFAULT_DT_SIM,
) -> PlantState:
    """Integrate to exactly ``t_next`` with equal substeps no longer than dt_sim."""
    span = t_next - state.t
    if span <= 0:
        raise InputError(f"Target time {t_next} is not after {state.t}")
    n_sub = max(1, math.ceil(span / dt_sim - 1e-9))
    h = span / n_sub
    current = state
    for _ in range(n_sub):
        current = step(params, current, u_motor, dist, h)
    return PlantState(q=current.q, qdot=current.qdot, t=float(t_next))


class JitterMode(Enum):
    """Control-cycle timing model."""

    NONE = "none"
    UNIFORM = "uniform"


def jittered_clock(
    mean_hz: float,
    jitter: JitterMode,
    seed: int | np.random.Generator | None,
    n: int,
    t0: float = 0.0,
) -> FloatArray:
    """Control-cycle timestamps.

    Args:
        mean_hz: Nominal control frequency
        jitter: ``NONE`` for a fixed period; ``UNIFORM`` draws every interval
            from [1/(1.1 f), 1/(0.9 f)]
        seed: Seed or generator for the interval draws
        n: Number of timestamps
        t0: First timestamp

    Returns:
        Strictly increasing timestamps, ``n`` of them
    """
    if mean_hz <= 0:
        raise InputError(f"Control frequency must be positive, got {mean_hz}")
    if n < 1:
        return np.zeros(0)
    if jitter is JitterMode.NONE:
        intervals = np.full(n - 1, 1.0 / mean_hz)
    else:
        rng = np.random.default_rng(seed)
        low, high = JITTER_BAND
        intervals = rng.uniform(1.0 / (high * mean_hz), 1.0 / (low * mean_hz), n - 1)
    return t0 + np.concatenate([[0.0], np.cumsum(intervals)])


@dataclass(frozen=True)
class ClockSpec:
    """Seeded control clock; independent streams share one scenario seed."""

    mean_hz: float = 100.0
    jitter: JitterMode = JitterMode.UNIFORM
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mean_hz <= 0:
            raise ConfigurationError(
                f"Control frequency must be positive, got {self.mean_hz}"
            )

    @property
    def period(self) -> float:
        """Nominal control interval."""
        return 1.0 / self.mean_hz

    def timestamps(self, n: int, t0: float = 0.0, stream: int = 0) -> FloatArray:
        """``n`` timestamps from the given random stream."""
        rng = np.random.default_rng([self.seed, stream])
        return jittered_clock(self.mean_hz, self.jitter, rng, n, t0)

    def until(self, t_end: float, t0: float = 0.0, stream: int = 0) -> FloatArray:
        """Timestamps from ``t0`` up to and including ``t_end``."""
        n = math.ceil((t_end - t0) * self.mean_hz / JITTER_BAND[0]) + 2
        stamps = self.timestamps(n, t0, stream)
        return stamps[stamps <= t_end + 1e-12]


class Plant:
    """Mutable simulated plant owned by one scenario loop."""

    def __init__(
        self,
        params: PlantParams,
        state: PlantState,
        disturbance: Disturbance | None = None,
        dt_sim: float = DEFAULT_DT_SIM,
    ) -> None:
        self.params = params
        self.state = state
        self.disturbance = disturbance or Disturbance.none()
        self.dt_sim = dt_sim

    @property
    def x(self) -> FloatArray:
        """Measured state [q; qdot]."""
        return self.state.x

    @property
    def t(self) -> float:
        return self.state.t

    def reset(self, state: PlantState) -> None:
        """Replace the current state."""
        logger.debug("Plant reset to q=%s at t=%.4f", state.q, state.t)
        self.state = state

    def apply(self, u_motor: ArrayLike, t_next: float) -> FloatArray:
        """Hold ``u_motor`` until ``t_next`` and return the clamped torque."""
        u = clamp_torque(self.params, u_motor)
        self.state = advance(
            self.params, self.state, u, self.disturbance, t_next, self.dt_sim
        )
        return u
