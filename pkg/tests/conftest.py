"""Shared test fixtures and configuration."""

import itertools
import json
from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest

from adaptive_kmpc.controller import ControllerMode, CycleRecord, EpisodeLog
from adaptive_kmpc.plant_sim import PlantParams
from adaptive_kmpc.qp_solver import SolveStatus

# (P, q, G, b_l, b_u) -> (x, objective)
QpOracle = Callable[..., tuple[np.ndarray, float]]


def _active_set_qp(P, q, G, b_l, b_u, feas_tol=1e-9):
    """Exact QP minimum by enumerating every active set.

    Rows with b_l == b_u are always active. For a strictly convex problem the
    optimum is the feasible equality-constrained minimizer of lowest cost.
    """
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)
    G = np.asarray(G, dtype=float).reshape(-1, q.shape[0])
    b_l = np.asarray(b_l, dtype=float)
    b_u = np.asarray(b_u, dtype=float)
    d = q.shape[0]
    equality = np.flatnonzero(np.isclose(b_l, b_u))
    free = [i for i in range(G.shape[0]) if i not in set(equality)]

    options = []
    for i in free:
        choices = [None]
        if np.isfinite(b_l[i]):
            choices.append(("lower", i))
        if np.isfinite(b_u[i]):
            choices.append(("upper", i))
        options.append(choices)

    best_x, best_obj = None, np.inf
    for combo in itertools.product(*options) if options else [()]:
        rows = list(equality)
        rhs = [b_u[i] for i in equality]
        for choice in combo:
            if choice is None:
                continue
            side, i = choice
            rows.append(i)
            rhs.append(b_l[i] if side == "lower" else b_u[i])
        a = G[rows]
        k = len(rows)
        kkt = np.zeros((d + k, d + k))
        kkt[:d, :d] = P
        kkt[:d, d:] = a.T
        kkt[d:, :d] = a
        sol = np.linalg.lstsq(kkt, np.concatenate([-q, rhs]), rcond=None)[0]
        x = sol[:d]
        if not np.allclose(kkt @ sol, np.concatenate([-q, rhs]), atol=1e-8):
            continue
        gx = G @ x
        if np.any(gx < b_l - feas_tol) or np.any(gx > b_u + feas_tol):
            continue
        obj = 0.5 * x @ P @ x + q @ x
        if obj < best_obj:
            best_x, best_obj = x, obj
    assert best_x is not None, "oracle found no feasible point"
    return best_x, float(best_obj)


@pytest.fixture
def qp_oracle() -> QpOracle:
    """Active-set enumeration oracle for small QPs."""
    return _active_set_qp


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded random generator."""
    return np.random.default_rng(20240601)


@pytest.fixture
def params_1r() -> PlantParams:
    """Default single-link arm."""
    return PlantParams.build(1)


@pytest.fixture
def params_2r() -> PlantParams:
    """Default two-link arm with belt transmission."""
    return PlantParams.build(2)


@pytest.fixture
def scenario_file(tmp_path: Path) -> Callable[..., Path]:
    """Factory writing a scenario JSON document into tmp_path.

    Args:
        tmp_path: Pytest's temporary directory fixture

    Returns:
        Function taking the document (and an optional file name) and
        returning the written path
    """

    def write(document: dict, name: str = "scenario.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(document))
        return path

    return write


@pytest.fixture
def make_log() -> Callable[..., EpisodeLog]:
    """Factory building an episode log from stacked arrays.

    Returns:
        Function taking times (N,), states (2 dof, N), controls (dof, N) and
        optional references (2 dof, N)
    """

    def build(times, states, controls, references=None, mode=ControllerMode.ADAPTIVE):
        states = np.asarray(states, dtype=float)
        controls = np.asarray(controls, dtype=float)
        refs = states if references is None else np.asarray(references, dtype=float)
        log = EpisodeLog(mode=mode)
        for k, t in enumerate(times):
            log.records.append(
                CycleRecord(
                    t=float(t),
                    x=states[:, k],
                    u=controls[:, k],
                    ref=refs[:, k],
                    refit=k == 0,
                    solver_iters=25,
                    objective=0.0,
                    status=SolveStatus.SOLVED,
                    primal_residual=0.0,
                    dual_residual=0.0,
                    solve_time=1e-3,
                    refit_time=2e-3 if k == 0 else 0.0,
                )
            )
        return log

    return build
