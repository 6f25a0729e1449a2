"""Scenario runs, comparisons and validation behind the ``kmpc`` command."""

from __future__ import annotations

import logging
import math
import os
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import IntEnum
from functools import partial
from pathlib import Path
from typing import Any

import numpy as np
from tabulate import tabulate

from .baselines import IlqrWeights, ReferenceTrajectory, ilqr_reference
from .controller import EpisodeLog, control_episode
from .errors import ConfigurationError, InputError, KmpcError
from .export import (
    ResultsExporter,
    load_metrics,
    load_reference_csv,
    save_reference_csv,
)
from .metrics import Metrics, compute_metrics, timing_stats
from .plant_sim import Plant, PlantState
from .scenario import ReferenceKind, Scenario, load_scenario, resolve_scenario

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "KMPC_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = Path("data/output")


class ExitCode(IntEnum):
    """Process exit status of a scenario run."""

    OK = 0
    ABORTED = 1
    CONFIG = 2


@dataclass(frozen=True)
class RunResult:
    """Outcome of one scenario run."""

    target: str
    exit_code: ExitCode
    output_dir: Path | None = None
    metrics: Metrics | None = None
    message: str = ""

    def summary_line(self) -> str:
        """One-line human-readable summary."""
        if self.metrics is None:
            return f"{self.target}: error ({self.message})"
        m = self.metrics
        tmse = ", ".join(f"{v:.3e}" for v in m.tmse)
        goal = "not reached" if m.goal_time is None else f"{m.goal_time:.2f} s"
        status = "ABORTED" if m.aborted else "ok"
        return (
            f"{m.scenario} [{m.mode}] {status}: tMSE=[{tmse}] rad^2*s, "
            f"E+={m.energy_pos:.3f} J, E-={m.energy_neg:.3f} J, goal {goal}"
        )


@dataclass(frozen=True)
class Comparison:
    """Cross-controller comparison of metrics files."""

    rows: list[dict[str, Any]]
    mismatched: bool

    @property
    def table(self) -> str:
        """Text table, followed by a warning line when scenarios differ."""
        text = tabulate(self.rows, headers="keys", floatfmt=".4g", missingval="-")
        if self.mismatched:
            text += "\nWARNING: metrics come from different scenarios or seeds"
        return text


def default_output_dir() -> Path:
    """Output root from ``KMPC_OUTPUT_DIR``, falling back to data/output."""
    value = os.environ.get(OUTPUT_DIR_ENV)
    return Path(value) if value else DEFAULT_OUTPUT_DIR


def build_reference(scenario: Scenario) -> ReferenceTrajectory:
    """Produce the trajectory a scenario tracks.

    iLQR references use the nominal plant parameters, so a payload carried
    by the simulated plant is unknown to them.

    Raises:
        ConfigurationError: If a CSV reference is missing, malformed or has
            the wrong state dimension
        GenerationError: If iLQR diverges
    """
    spec = scenario.reference
    dof = scenario.dof
    if spec.kind is ReferenceKind.CSV:
        if spec.path is None:
            raise ConfigurationError("CSV reference has no path")
        try:
            reference = load_reference_csv(spec.path)
        except (FileNotFoundError, InputError) as exc:
            raise ConfigurationError(str(exc)) from exc
        if reference.n != 2 * dof:
            raise ConfigurationError(
                f"Reference {spec.path} has {reference.n} states, expected {2 * dof}"
            )
        return reference

    if spec.xf is None or spec.x0 is None:
        raise ConfigurationError("Reference needs start and goal states")
    if spec.kind is ReferenceKind.CONSTANT:
        return ReferenceTrajectory.constant(spec.xf, spec.duration, spec.dt, dof)

    steps = max(2, math.ceil(spec.duration / spec.dt - 1e-9))
    weights = IlqrWeights(
        Q=np.zeros(2 * dof),
        R=np.full(dof, spec.control_weight),
        Qf=np.full(2 * dof, spec.terminal_weight),
    )
    return ilqr_reference(
        scenario.plant.nominal_params(), spec.x0, spec.xf, steps, spec.dt, weights
    )


def run_episode(scenario: Scenario, reference: ReferenceTrajectory) -> EpisodeLog:
    """Simulate the scenario's plant under its controller from the reference start."""
    plant = Plant(
        scenario.plant.plant_params(),
        PlantState.from_vector(reference.initial_state, 0.0),
        scenario.disturbance,
    )
    return control_episode(
        scenario.mode,
        plant,
        reference,
        scenario.mpc,
        scenario.preceding,
        scenario.clock,
        scenario.controller,
        nominal=scenario.plant.nominal_params(),
        duration=scenario.episode_duration,
    )


def write_outputs(
    reference: ReferenceTrajectory,
    log: EpisodeLog,
    metrics: Metrics,
    output_dir: Path,
) -> None:
    """Write every artifact of a run into ``output_dir``."""
    exporter = ResultsExporter()
    exporter.export_trajectory(log, output_dir / "trajectory.csv")
    exporter.export_metrics(metrics, output_dir / "metrics.json")
    exporter.export_timing(timing_stats(log), output_dir / "timing.json")
    exporter.export_buffer(log.buffer, output_dir / "buffer.csv")
    save_reference_csv(reference, output_dir / "reference.csv")
    if log.snapshots:
        exporter.export_snapshots(log.snapshots, output_dir / "models")


def run_scenario(
    target: str | Path,
    output_root: Path | None = None,
    seed: int | None = None,
) -> RunResult:
    """Run one scenario end to end and write its outputs.

    Args:
        target: Scenario file path or bundled scenario name
        output_root: Directory receiving ``<scenario name>/``; defaults to
            :func:`default_output_dir`
        seed: Overrides the scenario's clock seed

    Returns:
        Result with exit code 0 on success, 2 on a configuration error and 1
        for any other failure. An episode that aborts inside the control loop
        still writes its partial outputs.
    """
    name = str(target)
    try:
        scenario = load_scenario(resolve_scenario(name))
        if seed is not None:
            scenario = scenario.with_seed(seed)
        reference = build_reference(scenario)
        log = run_episode(scenario, reference)
        metrics = compute_metrics(
            scenario.name,
            scenario.seed,
            log,
            reference,
            scenario.metric_window_start,
        )
    except ConfigurationError as exc:
        logger.error("Scenario %s is invalid: %s", name, exc)
        return RunResult(name, ExitCode.CONFIG, message=str(exc))
    except KmpcError as exc:
        logger.error("Scenario %s failed: %s", name, exc)
        return RunResult(name, ExitCode.ABORTED, message=str(exc))

    output_dir = (output_root or default_output_dir()) / scenario.name
    write_outputs(reference, log, metrics, output_dir)
    code = ExitCode.ABORTED if log.aborted else ExitCode.OK
    return RunResult(name, code, output_dir, metrics, log.abort_reason or "")


def run_scenarios(
    targets: Sequence[str | Path],
    output_root: Path | None = None,
    seed: int | None = None,
    jobs: int = 1,
) -> list[RunResult]:
    """Run several independent scenarios, in worker processes if ``jobs > 1``.

    Results keep the order of ``targets``.
    """
    if jobs < 1:
        raise InputError(f"jobs must be at least 1, got {jobs}")
    run = partial(run_scenario, output_root=output_root, seed=seed)
    if jobs == 1 or len(targets) < 2:
        return [run(target) for target in targets]
    with ProcessPoolExecutor(max_workers=min(jobs, len(targets))) as pool:
        return list(pool.map(run, targets))


def _scenario_family(metrics: Metrics) -> str:
    suffix = f"_{metrics.mode}"
    name = metrics.scenario
    return name[: -len(suffix)] if name.endswith(suffix) else name


def compare(paths: Sequence[Path]) -> Comparison:
    """Tabulate tMSE and energy of several runs.

    Runs are flagged as mismatched when they come from different scenario
    families (names without the controller suffix), seeds or joint counts.

    Raises:
        InputError: If fewer than two files are given or one is unreadable
    """
    if len(paths) < 2:
        raise InputError(
            f"Comparison needs at least two metrics files, got {len(paths)}"
        )
    loaded: list[Metrics] = []
    for path in paths:
        try:
            loaded.append(load_metrics(path))
        except FileNotFoundError as exc:
            raise InputError(str(exc)) from exc

    dof = max(len(m.tmse) for m in loaded)
    rows = []
    for m in loaded:
        row: dict[str, Any] = {"scenario": m.scenario, "mode": m.mode, "seed": m.seed}
        for i in range(dof):
            row[f"tmse_q{i + 1}"] = float(m.tmse[i]) if i < len(m.tmse) else None
        row["energy_pos"] = m.energy_pos
        row["energy_neg"] = m.energy_neg
        row["goal_time"] = m.goal_time
        row["aborted"] = m.aborted
        rows.append(row)

    signatures = {(_scenario_family(m), m.seed, len(m.tmse)) for m in loaded}
    mismatched = len(signatures) > 1
    if mismatched:
        logger.warning(
            "Comparing metrics from different scenarios: %s",
            ", ".join(sorted(str(s) for s in signatures)),
        )
    return Comparison(rows=rows, mismatched=mismatched)


def validate(target: str | Path) -> Scenario:
    """Load and validate a scenario, including its CSV reference if any.

    Raises:
        ConfigurationError: If the scenario is invalid
    """
    scenario = load_scenario(resolve_scenario(str(target)))
    spec = scenario.reference
    if spec.kind is ReferenceKind.CSV:
        build_reference(scenario)
    return scenario
