"""Scenario configuration files.

A scenario is one JSON document describing the plant, the controller, the
preceding experiment, the reference, an optional disturbance and the control
clock. Every section is optional; defaults live on the dataclasses below.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .arrays import FloatArray
from .controller import (
    ControllerMode,
    ControllerSettings,
    MpcSettings,
    PrecedingExperiment,
    PrecedingKind,
)
from .errors import ConfigurationError, KmpcError
from .plant_sim import (
    ClockSpec,
    Disturbance,
    DisturbanceKind,
    JitterMode,
    PlantParams,
)
from .qp_solver import SolverConfig

SCENARIO_PACKAGE = "adaptive_kmpc.scenarios"
DEFAULT_WINDOW_START = 0.75
DEFAULT_REFERENCE_DURATION = 3.0


class ReferenceKind(Enum):
    """Where the tracked trajectory comes from."""

    ILQR = "ilqr"
    CSV = "csv"
    CONSTANT = "constant"


@dataclass(frozen=True)
class PlantConfig:
    """Plant selection plus parameter overrides.

    ``payload`` is carried by the simulated plant only; the nominal
    parameters used for reference generation and linearization MPC never
    include it.
    """

    joints: int = 1
    payload: float = 0.0
    overrides: tuple[tuple[str, Any], ...] = ()

    def nominal_params(self) -> PlantParams:
        """Parameters known to the model-based components."""
        return PlantParams.build(self.joints, **dict(self.overrides))

    def plant_params(self) -> PlantParams:
        """Parameters of the simulated plant."""
        return self.nominal_params().with_payload(self.payload)


@dataclass(frozen=True, eq=False)
class ReferenceSpec:
    """Reference source: iLQR swing-up, CSV file or constant hold."""

    kind: ReferenceKind = ReferenceKind.ILQR
    x0: FloatArray | None = None
    xf: FloatArray | None = None
    duration: float = DEFAULT_REFERENCE_DURATION
    dt: float = 0.01
    path: Path | None = None
    terminal_weight: float = 1e4
    control_weight: float = 0.1


@dataclass(frozen=True, eq=False)
class Scenario:
    """A fully validated experiment description."""

    name: str
    plant: PlantConfig
    mode: ControllerMode
    mpc: MpcSettings
    controller: ControllerSettings
    preceding: PrecedingExperiment | None
    reference: ReferenceSpec
    disturbance: Disturbance
    clock: ClockSpec
    episode_duration: float | None = None
    metric_window_start: float = DEFAULT_WINDOW_START
    description: str = ""
    source: Path | None = field(default=None, compare=False)

    @property
    def dof(self) -> int:
        return self.plant.joints

    @property
    def seed(self) -> int:
        return self.clock.seed

    def with_seed(self, seed: int) -> Scenario:
        """Copy with a different clock seed."""
        return dataclasses.replace(
            self, clock=dataclasses.replace(self.clock, seed=int(seed))
        )


_PLANT_KEYS = {
    "joints",
    "payload",
    "mass",
    "length",
    "com",
    "inertia",
    "friction",
    "gravity",
    "structure",
    "torque_limit",
}
_TOP_KEYS = {
    "name",
    "description",
    "plant",
    "controller",
    "mpc",
    "preceding",
    "reference",
    "disturbance",
    "clock",
    "solver",
    "episode_duration",
    "metric_window_start",
}


def _section(data: dict[str, Any], key: str) -> dict[str, Any]:
    value = data.get(key, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigurationError(f"Section '{key}' must be an object")
    return value


def _check_keys(section: dict[str, Any], allowed: set[str], where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigurationError(f"Unknown keys in {where}: {', '.join(unknown)}")


def _enum(enum_type: type[Any], value: Any, where: str) -> Any:
    try:
        return enum_type(value)
    except ValueError:
        options = ", ".join(str(e.value) for e in enum_type)
        raise ConfigurationError(
            f"Invalid {where} '{value}'; expected one of: {options}"
        ) from None


def _vector(value: Any, where: str, lengths: tuple[int, ...]) -> FloatArray:
    try:
        arr = np.atleast_1d(np.asarray(value, dtype=float))
    except (TypeError, ValueError):
        raise ConfigurationError(f"{where} must be a number or a list") from None
    if arr.ndim != 1 or arr.shape[0] not in lengths:
        expected = " or ".join(str(n) for n in lengths)
        raise ConfigurationError(f"{where} must have {expected} entries")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{where} must be finite")
    return arr


def _number(section: dict[str, Any], key: str, default: float, where: str) -> float:
    value = section.get(key, default)
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{where}.{key} must be a number") from None
    return number


def _parse_plant(section: dict[str, Any]) -> PlantConfig:
    _check_keys(section, _PLANT_KEYS, "plant")
    joints = section.get("joints", 1)
    if joints not in (1, 2):
        raise ConfigurationError(f"plant.joints must be 1 or 2, got {joints}")
    payload = _number(section, "payload", 0.0, "plant")
    overrides = tuple(
        (key, section[key])
        for key in sorted(section)
        if key not in ("joints", "payload")
    )
    config = PlantConfig(joints=int(joints), payload=payload, overrides=overrides)
    config.plant_params()
    return config


def _parse_mpc(section: dict[str, Any], dof: int) -> MpcSettings:
    _check_keys(
        section,
        {"horizon", "state_weights", "nonlinear_weight", "control_weights", "u_max"},
        "mpc",
    )
    defaults = MpcSettings()
    horizon = section.get("horizon", defaults.horizon)
    if not isinstance(horizon, int) or horizon < 1:
        raise ConfigurationError(
            f"mpc.horizon must be a positive integer, got {horizon}"
        )
    u_max = section.get("u_max")
    return MpcSettings(
        horizon=horizon,
        state_weights=_vector(
            section.get("state_weights", defaults.state_weights),
            "mpc.state_weights",
            (2, 2 * dof),
        ),
        nonlinear_weight=_number(section, "nonlinear_weight", 0.0, "mpc"),
        control_weights=_vector(
            section.get("control_weights", defaults.control_weights),
            "mpc.control_weights",
            (1, dof),
        ),
        u_max=None if u_max is None else float(u_max),
    )


def _parse_controller(
    section: dict[str, Any], solver: SolverConfig
) -> ControllerSettings:
    fields = {f.name for f in dataclasses.fields(ControllerSettings)} - {"solver"}
    _check_keys(section, fields | {"mode"}, "controller")
    kwargs = {key: section[key] for key in fields if key in section}
    try:
        return ControllerSettings(solver=solver, **kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"Invalid controller settings: {exc}") from None


def _parse_solver(section: dict[str, Any]) -> SolverConfig:
    fields = {f.name for f in dataclasses.fields(SolverConfig)}
    _check_keys(section, fields, "solver")
    try:
        return SolverConfig(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"Invalid solver settings: {exc}") from None


def _parse_preceding(
    section: dict[str, Any] | None,
    mode: ControllerMode,
    dof: int,
    capacity: int,
    clock: ClockSpec,
    reference: ReferenceSpec,
) -> PrecedingExperiment | None:
    if mode is ControllerMode.LINEARIZATION and not section:
        return None
    section = section or {}
    _check_keys(
        section, {"kind", "duration", "amplitude", "frequency", "phase"}, "preceding"
    )
    default_kind = (
        PrecedingKind.LINEARIZATION_TRACKING
        if mode is ControllerMode.STATIC
        else PrecedingKind.SINUSOIDAL_OPEN_LOOP
    )
    kind = _enum(
        PrecedingKind, section.get("kind", default_kind.value), "preceding.kind"
    )
    default_duration = (
        reference.duration
        if kind is PrecedingKind.LINEARIZATION_TRACKING
        else capacity / clock.mean_hz
    )
    return PrecedingExperiment(
        kind=kind,
        duration=_number(section, "duration", default_duration, "preceding"),
        amplitude=_vector(
            section.get("amplitude", 0.5), "preceding.amplitude", (1, dof)
        ),
        frequency=_number(section, "frequency", 0.5, "preceding"),
        phase=_vector(section.get("phase", 0.0), "preceding.phase", (1, dof)),
    )


def _parse_reference(
    section: dict[str, Any], dof: int, base_dir: Path | None
) -> ReferenceSpec:
    _check_keys(
        section,
        {
            "kind",
            "x0",
            "xf",
            "state",
            "duration",
            "dt",
            "path",
            "terminal_weight",
            "control_weight",
        },
        "reference",
    )
    kind = _enum(ReferenceKind, section.get("kind", "ilqr"), "reference.kind")
    n = 2 * dof
    path: Path | None = None
    if kind is ReferenceKind.CSV:
        if "path" not in section:
            raise ConfigurationError("reference.path is required for CSV references")
        path = Path(section["path"])
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path

    x0 = _vector(section.get("x0", [0.0] * n), "reference.x0", (n,))
    if kind is ReferenceKind.CONSTANT:
        state = section.get("state", section.get("xf"))
        if state is None:
            raise ConfigurationError("reference.state is required for constant holds")
        xf = _vector(state, "reference.state", (n,))
        x0 = xf
    else:
        default_goal = [math.pi] + [0.0] * (n - 1)
        xf = _vector(section.get("xf", default_goal), "reference.xf", (n,))

    spec = ReferenceSpec(
        kind=kind,
        x0=x0,
        xf=xf,
        duration=_number(section, "duration", DEFAULT_REFERENCE_DURATION, "reference"),
        dt=_number(section, "dt", 0.01, "reference"),
        path=path,
        terminal_weight=_number(section, "terminal_weight", 1e4, "reference"),
        control_weight=_number(section, "control_weight", 0.1, "reference"),
    )
    if spec.duration <= 0 or spec.dt <= 0:
        raise ConfigurationError("reference.duration and reference.dt must be positive")
    return spec


def _parse_disturbance(section: dict[str, Any], dof: int) -> Disturbance:
    if not section:
        return Disturbance.none()
    _check_keys(section, {"kind", "t_start", "t_end", "magnitude"}, "disturbance")
    kind = _enum(DisturbanceKind, section.get("kind", "none"), "disturbance.kind")
    t_end = section.get("t_end")
    magnitude = _vector(
        section.get("magnitude", 0.0), "disturbance.magnitude", (1, dof)
    )
    if magnitude.shape[0] < dof:
        magnitude = np.pad(magnitude, (0, dof - magnitude.shape[0]))
    return Disturbance(
        kind=kind,
        t_start=_number(section, "t_start", 0.0, "disturbance"),
        t_end=math.inf if t_end is None else float(t_end),
        magnitude=magnitude,
    )


def _parse_clock(section: dict[str, Any]) -> ClockSpec:
    _check_keys(section, {"mean_hz", "jitter", "seed"}, "clock")
    seed = section.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigurationError(f"clock.seed must be a non-negative integer: {seed}")
    return ClockSpec(
        mean_hz=_number(section, "mean_hz", 100.0, "clock"),
        jitter=_enum(JitterMode, section.get("jitter", "uniform"), "clock.jitter"),
        seed=seed,
    )


def parse_scenario(
    data: dict[str, Any], name: str = "scenario", base_dir: Path | None = None
) -> Scenario:
    """Validate a scenario document.

    Args:
        data: Decoded JSON object
        name: Fallback name when the document has none
        base_dir: Directory relative reference paths are resolved against

    Returns:
        Validated scenario

    Raises:
        ConfigurationError: On any unknown key, wrong type or inconsistent
            dimension
    """
    if not isinstance(data, dict):
        raise ConfigurationError("Scenario document must be a JSON object")
    _check_keys(data, _TOP_KEYS, "scenario")
    try:
        plant = _parse_plant(_section(data, "plant"))
        dof = plant.joints
        controller_section = _section(data, "controller")
        mode = _enum(
            ControllerMode,
            controller_section.get("mode", "adaptive"),
            "controller.mode",
        )
        solver = _parse_solver(_section(data, "solver"))
        controller = _parse_controller(controller_section, solver)
        clock = _parse_clock(_section(data, "clock"))
        reference = _parse_reference(_section(data, "reference"), dof, base_dir)
        preceding_section = data.get("preceding")
        if preceding_section is not None and not isinstance(preceding_section, dict):
            raise ConfigurationError("Section 'preceding' must be an object")
        preceding = _parse_preceding(
            preceding_section,
            mode,
            dof,
            controller.buffer_capacity,
            clock,
            reference,
        )
        raw_duration = data.get("episode_duration")
        episode_duration = None if raw_duration is None else float(raw_duration)
        scenario = Scenario(
            name=str(data.get("name", name)),
            description=str(data.get("description", "")),
            plant=plant,
            mode=mode,
            mpc=_parse_mpc(_section(data, "mpc"), dof),
            controller=controller,
            preceding=preceding,
            reference=reference,
            disturbance=_parse_disturbance(_section(data, "disturbance"), dof),
            clock=clock,
            episode_duration=episode_duration,
            metric_window_start=_number(
                data, "metric_window_start", DEFAULT_WINDOW_START, "scenario"
            ),
        )
    except ConfigurationError:
        raise
    except (KmpcError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"Invalid scenario '{name}': {exc}") from exc
    return scenario


def load_scenario(path: Path) -> Scenario:
    """Load and validate a scenario file.

    Raises:
        ConfigurationError: If the file is missing, not JSON, or invalid
    """
    if not path.exists():
        raise ConfigurationError(f"Scenario file not found: {path}")
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"Scenario file is not valid JSON: {path}") from exc
    scenario = parse_scenario(data, name=path.stem, base_dir=path.parent)
    return dataclasses.replace(scenario, source=path)


def bundled_scenarios() -> list[str]:
    """Names of the scenarios shipped with the package."""
    root = resources.files(SCENARIO_PACKAGE)
    return sorted(
        entry.name.removesuffix(".json")
        for entry in root.iterdir()
        if entry.name.endswith(".json")
    )


def resolve_scenario(name_or_path: str) -> Path:
    """Map a bundled scenario name or a file path to a path.

    Raises:
        ConfigurationError: If neither a file nor a bundled scenario matches
    """
    candidate = Path(name_or_path)
    if candidate.exists():
        return candidate
    bundled = resources.files(SCENARIO_PACKAGE) / f"{candidate.stem}.json"
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigurationError(f"No scenario file or bundled scenario: {name_or_path}")
