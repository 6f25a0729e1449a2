"""Module for writing and reading episode artifacts."""

from __future__ import annotations

import csv
import json
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from .baselines import ReferenceTrajectory
from .buffer import Sample
from .controller import EpisodeLog, ModelSnapshot
from .edmd import KoopmanModel
from .errors import InputError
from .metrics import Metrics


def _joint_columns(prefix: str, count: int) -> list[str]:
    return [f"{prefix}{i}" for i in range(1, count + 1)]


def _floats(values: Iterable[Any]) -> list[float]:
    return [float(v) for v in values]


def write_json(data: dict[str, Any], output_path: Path) -> None:
    """Write a strict JSON document with sorted keys.

    Raises:
        ValueError: If the document contains NaN or infinite floats
    """
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, "w", encoding="utf-8") as f:
        f.write(json.dumps(data, indent=2, sort_keys=True, allow_nan=False))
        f.write("\n")


class ResultsExporter:
    """Exports episode results to CSV and JSON files."""

    @staticmethod
    def _sanitize_csv_field(value: Any) -> Any:
        """Sanitize a CSV field to prevent formula injection.

        Args:
            value: The value to sanitize

        Returns:
            Sanitized value safe for CSV export
        """
        if not isinstance(value, str):
            return value

        if value and value[0] in ("=", "+", "-", "@", "\t", "\r"):
            return "'" + value

        return value

    def export_trajectory(self, log: EpisodeLog, output_path: Path) -> None:
        """Export one row per control cycle.

        Columns are ``t, q_i.., qdot_i.., u_i.., ref_q_i.., refit_flag,
        solver_iters``.

        Args:
            log: Episode log to export
            output_path: Path where the CSV file will be written
        """
        output_path.parent.mkdir(parents=True, exist_ok=True)
        dof = log.records[0].u.shape[0] if log.records else 0

        with open(output_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(
                ["t"]
                + _joint_columns("q", dof)
                + _joint_columns("qdot", dof)
                + _joint_columns("u", dof)
                + _joint_columns("ref_q", dof)
                + ["refit_flag", "solver_iters"]
            )
            for record in log.records:
                writer.writerow(
                    [float(record.t)]
                    + _floats(record.x)
                    + _floats(record.u)
                    + _floats(record.ref[:dof])
                    + [int(record.refit), int(record.solver_iters)]
                )

    def export_metrics(self, metrics: Metrics, output_path: Path) -> None:
        """Export deterministic metrics as JSON."""
        write_json(metrics.to_dict(), output_path)

    def export_timing(self, timing: dict[str, float], output_path: Path) -> None:
        """Export wall-clock statistics, kept apart from the metrics."""
        write_json(timing, output_path)

    def export_buffer(self, samples: Sequence[Sample], output_path: Path) -> None:
        """Export buffer contents as ``t, x_i.., u_i..`` rows."""
        output_path.parent.mkdir(parents=True, exist_ok=True)
        n = samples[0].x.shape[0] if samples else 0
        m = samples[0].u.shape[0] if samples else 0

        with open(output_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["t"] + _joint_columns("x", n) + _joint_columns("u", m))
            for sample in samples:
                writer.writerow([sample.t] + _floats(sample.x) + _floats(sample.u))

    def export_snapshots(
        self, snapshots: Sequence[ModelSnapshot], output_dir: Path
    ) -> list[Path]:
        """Export each model snapshot to ``model_<cycle>.json``.

        Returns:
            Paths of the written files
        """
        written = []
        for snapshot in snapshots:
            path = output_dir / f"model_{snapshot.cycle:05d}.json"
            document: dict[str, Any] = {"cycle": snapshot.cycle, "t": snapshot.t}
            document.update(snapshot.model.to_dict())
            write_json(document, path)
            written.append(path)
        return written

    def export_comparison(
        self, rows: Sequence[dict[str, Any]], output_path: Path
    ) -> None:
        """Export a comparison table, one row per metrics file.

        Args:
            rows: Dictionaries sharing the same keys, in column order
            output_path: Path where the CSV file will be written
        """
        output_path.parent.mkdir(parents=True, exist_ok=True)
        header = list(rows[0]) if rows else []

        with open(output_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for row in rows:
                writer.writerow([self._sanitize_csv_field(row[key]) for key in header])


def save_reference_csv(reference: ReferenceTrajectory, output_path: Path) -> None:
    """Write a reference as ``t, q.., qdot.., u..``; the last row has no torque."""
    output_path.parent.mkdir(parents=True, exist_ok=True)
    dof = reference.n // 2
    m = reference.U_ref.shape[0]

    with open(output_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["t"]
            + _joint_columns("q", dof)
            + _joint_columns("qdot", dof)
            + _joint_columns("u", m)
        )
        for k, t in enumerate(reference.times):
            torque = (
                _floats(reference.U_ref[:, k]) if k < reference.steps else [""] * m
            )
            writer.writerow([float(t)] + _floats(reference.X_ref[:, k]) + torque)


def load_reference_csv(filepath: Path) -> ReferenceTrajectory:
    """Load a reference written by :func:`save_reference_csv`.

    Args:
        filepath: Path to the CSV file

    Returns:
        Reference on the file's (uniform) time grid

    Raises:
        FileNotFoundError: If the file doesn't exist
        InputError: If columns are missing, cells are not numbers or the
            time grid is not uniform
    """
    if not filepath.exists():
        raise FileNotFoundError(f"Reference file not found: {filepath}")

    with open(filepath, encoding="utf-8") as f:
        reader = csv.DictReader(f)
        fields = reader.fieldnames or []
        rows = list(reader)

    q_cols = [c for c in fields if c.startswith("q") and not c.startswith("qdot")]
    qdot_cols = [c for c in fields if c.startswith("qdot")]
    u_cols = [c for c in fields if c.startswith("u")]
    if "t" not in fields or not q_cols or len(qdot_cols) != len(q_cols) or not u_cols:
        raise InputError(
            f"Reference file {filepath} needs columns t, q.., qdot.., u.."
        )
    if len(rows) < 2:
        raise InputError(f"Reference file {filepath} needs at least two rows")

    try:
        times = np.array([float(row["t"]) for row in rows])
        states = np.array(
            [[float(row[c]) for c in q_cols + qdot_cols] for row in rows]
        ).T
        torques = np.array([[float(row[c]) for c in u_cols] for row in rows[:-1]]).T
    except (TypeError, ValueError) as exc:
        raise InputError(f"Invalid number in reference file {filepath}") from exc

    intervals = np.diff(times)
    dt = float(intervals.mean())
    if not np.allclose(intervals, dt, rtol=1e-6, atol=1e-9):
        raise InputError(f"Reference file {filepath} is not uniformly sampled")
    if abs(times[0]) > 1e-9:
        raise InputError(f"Reference file {filepath} must start at t=0")
    return ReferenceTrajectory(X_ref=states, U_ref=torques, dt=dt)


def load_metrics(filepath: Path) -> Metrics:
    """Load a metrics JSON file.

    Raises:
        FileNotFoundError: If the file doesn't exist
        InputError: If the file is not a metrics document
    """
    if not filepath.exists():
        raise FileNotFoundError(f"Metrics file not found: {filepath}")
    try:
        with open(filepath, encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise InputError(f"Metrics file is not valid JSON: {filepath}") from exc
    if not isinstance(data, dict):
        raise InputError(f"Metrics file is not a JSON object: {filepath}")
    return Metrics.from_dict(data)


def load_model(filepath: Path) -> KoopmanModel:
    """Load a model snapshot written by :meth:`ResultsExporter.export_snapshots`."""
    with open(filepath, encoding="utf-8") as f:
        return KoopmanModel.from_dict(json.load(f))

