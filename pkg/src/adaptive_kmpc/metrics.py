"""Tracking and actuation metrics of an episode."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import ArrayLike

from .arrays import FloatArray, as_vector
from .baselines import ReferenceTrajectory
from .controller import EpisodeLog
from .errors import InputError
from .qp_solver import SolveStatus


def sample_intervals(times: ArrayLike) -> FloatArray:
    """Duration each sample is held: t_{k+1} - t_k, the last one repeating
    the previous interval."""
    t = as_vector(times, name="times")
    if t.shape[0] < 2:
        return np.zeros(t.shape[0])
    intervals = np.diff(t)
    return np.append(intervals, intervals[-1])


def _window(times: FloatArray, window_start: float) -> FloatArray:
    mask = times >= window_start
    if not np.any(mask):
        raise InputError(f"No samples at or after t={window_start}")
    return mask


def time_weighted_mse(
    times: ArrayLike, errors: ArrayLike, window_start: float = 0.0
) -> FloatArray:
    """Per-row (1/N) sum_k dt_k e_k^2 over samples with t >= window_start.

    Args:
        times: Sample times, length N_total
        errors: Tracking errors, shape (rows, N_total)
        window_start: First time included

    Raises:
        InputError: If the window holds no samples
    """
    t = as_vector(times, name="times")
    err = np.atleast_2d(np.asarray(errors, dtype=float))
    if err.shape[1] != t.shape[0]:
        raise InputError("Errors and times have different lengths")
    dt = sample_intervals(t)
    mask = _window(t, window_start)
    weighted = dt[mask] * err[:, mask] ** 2
    return np.asarray(weighted.sum(axis=1) / np.count_nonzero(mask))


def tmse(
    log: EpisodeLog, reference: ReferenceTrajectory, window_start: float = 0.0
) -> FloatArray:
    """Joint-angle tMSE against the reference interpolated at the log times."""
    if not len(log):
        raise InputError("Episode log is empty")
    times = log.times
    dof = reference.n // 2
    ref_angles = reference.states_at(times)[:dof]
    return time_weighted_mse(times, log.states[:dof] - ref_angles, window_start)


def energy(log: EpisodeLog, window_start: float = -np.inf) -> tuple[float, float]:
    """Positive and negative actuation energy.

    The power of each sample is sum_i u_i omega_i; positive and negative
    parts are integrated separately with the sample intervals.

    Returns:
        (positive energy >= 0, negative energy <= 0) in joules
    """
    if not len(log):
        raise InputError("Episode log is empty")
    times = log.times
    dof = log.controls.shape[0]
    power = np.sum(log.controls * log.states[dof:], axis=0)
    dt = sample_intervals(times)
    mask = _window(times, window_start)
    positive = float(np.sum(np.maximum(power[mask], 0.0) * dt[mask]))
    negative = float(np.sum(np.minimum(power[mask], 0.0) * dt[mask]))
    return positive, negative


def _finite_or_none(value: float) -> float | None:
    """NaN tracking values of aborted runs are stored as JSON null."""
    return float(value) if np.isfinite(value) else None


def _float_or_nan(value: Any) -> float:
    return math.nan if value is None else float(value)


@dataclass(frozen=True, eq=False)
class Metrics:
    """Deterministic summary of one episode."""

    scenario: str
    mode: str
    seed: int
    tmse: FloatArray
    energy_pos: float
    energy_neg: float
    goal_time: float | None
    cycles: int
    refits: int
    solver_iters_mean: float
    solver_iters_max: int
    max_iter_cycles: int
    window_start: float
    aborted: bool = False
    abort_reason: str | None = None

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation."""
        return {
            "scenario": self.scenario,
            "mode": self.mode,
            "seed": self.seed,
            "tmse": [_finite_or_none(v) for v in self.tmse],
            "energy_pos": _finite_or_none(self.energy_pos),
            "energy_neg": _finite_or_none(self.energy_neg),
            "goal_time": self.goal_time,
            "cycles": self.cycles,
            "refits": self.refits,
            "solver_iters_mean": self.solver_iters_mean,
            "solver_iters_max": self.solver_iters_max,
            "max_iter_cycles": self.max_iter_cycles,
            "window_start": self.window_start,
            "aborted": self.aborted,
            "abort_reason": self.abort_reason,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Metrics:
        """Rebuild from :meth:`to_dict` output.

        Raises:
            InputError: If a required key is missing or a value is malformed
        """
        try:
            return cls(
                scenario=str(data["scenario"]),
                mode=str(data["mode"]),
                seed=int(data["seed"]),
                tmse=np.array([_float_or_nan(v) for v in data["tmse"]]),
                energy_pos=_float_or_nan(data["energy_pos"]),
                energy_neg=_float_or_nan(data["energy_neg"]),
                goal_time=data.get("goal_time"),
                cycles=int(data["cycles"]),
                refits=int(data.get("refits", 0)),
                solver_iters_mean=float(data.get("solver_iters_mean", 0.0)),
                solver_iters_max=int(data.get("solver_iters_max", 0)),
                max_iter_cycles=int(data.get("max_iter_cycles", 0)),
                window_start=float(data.get("window_start", 0.0)),
                aborted=bool(data.get("aborted", False)),
                abort_reason=data.get("abort_reason"),
            )
        except KeyError as exc:
            raise InputError(f"Metrics document is missing key {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise InputError(f"Metrics document has an invalid value: {exc}") from exc


def compute_metrics(
    scenario: str,
    seed: int,
    log: EpisodeLog,
    reference: ReferenceTrajectory,
    window_start: float,
) -> Metrics:
    """Summarize an episode.

    tMSE and energy cover samples from ``window_start`` on; an aborted episode
    whose log ends before the window gets NaN tracking values.
    """
    iterations = np.array([r.solver_iters for r in log.records], dtype=float)
    try:
        errors = tmse(log, reference, window_start)
        positive, negative = energy(log, window_start)
    except InputError:
        if not log.aborted:
            raise
        errors = np.full(reference.n // 2, np.nan)
        positive, negative = float("nan"), float("nan")
    return Metrics(
        scenario=scenario,
        mode=log.mode.value,
        seed=seed,
        tmse=errors,
        energy_pos=positive,
        energy_neg=negative,
        goal_time=log.goal_time,
        cycles=len(log),
        refits=log.refit_count,
        solver_iters_mean=float(iterations.mean()) if iterations.size else 0.0,
        solver_iters_max=int(iterations.max()) if iterations.size else 0,
        max_iter_cycles=sum(
            1 for r in log.records if r.status is SolveStatus.MAX_ITER
        ),
        window_start=window_start,
        aborted=log.aborted,
        abort_reason=log.abort_reason,
    )


def timing_stats(log: EpisodeLog) -> dict[str, float]:
    """Wall-clock statistics of identification and QP solving (seconds)."""
    refits = np.array([r.refit_time for r in log.records if r.refit], dtype=float)
    solves = np.array([r.solve_time for r in log.records], dtype=float)

    def summary(values: FloatArray, prefix: str) -> dict[str, float]:
        if not values.size:
            return {f"{prefix}_mean": 0.0, f"{prefix}_max": 0.0}
        return {
            f"{prefix}_mean": float(values.mean()),
            f"{prefix}_max": float(values.max()),
        }

    return {**summary(refits, "refit_time"), **summary(solves, "solve_time")}
