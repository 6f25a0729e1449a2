"""Fixed-capacity trajectory buffer with PCHIP resampling.

Measured states and applied controls are kept first in, first out. Because the
control frequency jitters, the buffer content is interpolated with monotone
piecewise cubic Hermite polynomials and re-evaluated on a uniform time grid
before it is handed to EDMD.
"""

from __future__ import annotations

import logging
from collections import deque
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy.interpolate import PchipInterpolator

from .arrays import FloatArray, as_matrix, as_vector, require_finite
from .errors import IdentificationError, InputError

logger = logging.getLogger(__name__)

DEFAULT_CAPACITY = 200
MIN_RESAMPLE_SAMPLES = 4

# Tolerance (in grid steps) for including a grid point that lands on the last
# timestamp up to rounding.
_GRID_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class Sample:
    """State and control measured at one control cycle.

    ``u`` is the motor torque applied from ``t`` until the next sample.
    """

    t: float
    x: FloatArray
    u: FloatArray

    def __post_init__(self) -> None:
        if not np.isfinite(self.t):
            raise InputError(f"Sample time must be finite, got {self.t}")
        require_finite(self.x, "sample state")
        require_finite(self.u, "sample control")

    @classmethod
    def of(cls, t: float, x: ArrayLike, u: ArrayLike) -> Sample:
        """Build a sample, copying the arrays so later mutation cannot leak in."""
        return cls(
            t=float(t),
            x=as_vector(x, name="sample state").copy(),
            u=as_vector(u, name="sample control").copy(),
        )


@dataclass(frozen=True, eq=False)
class ResampledData:
    """Time-equidistant EDMD data.

    ``X[:, k]`` and ``U[:, k]`` are the state and control at grid point k and
    ``Xbar[:, k]`` is the state one ``dt`` later.
    """

    X: FloatArray
    Xbar: FloatArray
    U: FloatArray
    dt: float

    @property
    def n_pairs(self) -> int:
        """Number of (x, u, x+) snapshot pairs."""
        return int(self.X.shape[1])


def pchip_coefficients(t: ArrayLike, y: ArrayLike) -> PchipInterpolator:
    """Fit a Fritsch–Carlson monotone cubic Hermite interpolant.

    Interior knot derivatives use the weighted harmonic mean of the adjacent
    secant slopes (zero where they differ in sign or either is zero); end
    derivatives use the one-sided three-point formula with the shape
    preserving clamp. The returned object is a piecewise polynomial: ``.c``
    holds the per-interval cubic coefficients (highest power first, local
    coordinate ``t - t_i``) and ``.x`` the breakpoints.

    Args:
        t: Strictly increasing knot times, at least two
        y: Knot values; 1-D, or 2-D with one row per coordinate

    Returns:
        Callable piecewise cubic

    Raises:
        InputError: If fewer than two knots are given or times do not increase
    """
    times = as_vector(t, name="knot times")
    values = np.asarray(y, dtype=float)
    if times.shape[0] < 2:
        raise InputError(f"PCHIP needs at least 2 knots, got {times.shape[0]}")
    if values.shape[-1] != times.shape[0]:
        raise InputError(
            f"Knot values have {values.shape[-1]} entries for {times.shape[0]} knots"
        )
    if np.any(np.diff(times) <= 0):
        raise InputError("Knot times must be strictly increasing")
    require_finite(times, "knot times")
    require_finite(values, "knot values")
    return PchipInterpolator(times, values, axis=values.ndim - 1, extrapolate=False)


class TrajectoryBuffer:
    """FIFO store of timestamped (state, control) samples."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY) -> None:
        """Initialize an empty buffer.

        Args:
            capacity: Maximum number of samples kept; older ones are evicted
        """
        if capacity < 2:
            raise InputError(f"Buffer capacity must be at least 2, got {capacity}")
        self.capacity = capacity
        self._samples: deque[Sample] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self._samples)

    @property
    def is_full(self) -> bool:
        """True once the buffer holds ``capacity`` samples."""
        return len(self._samples) == self.capacity

    @property
    def last_time(self) -> float | None:
        """Timestamp of the newest sample, or None when empty."""
        return self._samples[-1].t if self._samples else None

    def push(self, sample: Sample) -> None:
        """Append a sample, evicting the oldest one when full.

        Raises:
            InputError: If the timestamp does not increase, or the sample
                dimensions differ from the stored ones
        """
        if self._samples:
            last = self._samples[-1]
            if sample.t <= last.t:
                raise InputError(
                    f"Sample time {sample.t} does not follow last time {last.t}"
                )
            if sample.x.shape != last.x.shape or sample.u.shape != last.u.shape:
                raise InputError("Sample dimensions differ from buffer contents")
        self._samples.append(sample)

    def extend(self, times: ArrayLike, states: ArrayLike, controls: ArrayLike) -> None:
        """Bulk-fill from matrices (columns are samples).

        Args:
            times: Timestamps, length N
            states: States, shape (n, N)
            controls: Controls, shape (m, N)
        """
        t = as_vector(times, name="times")
        x = as_matrix(states, cols=t.shape[0], name="states")
        u = as_matrix(controls, cols=t.shape[0], name="controls")
        for k in range(t.shape[0]):
            self.push(Sample.of(t[k], x[:, k], u[:, k]))

    def clear(self) -> None:
        """Drop all samples."""
        self._samples.clear()

    def snapshot(self) -> tuple[Sample, ...]:
        """Immutable copy of the current contents, oldest first."""
        return tuple(self._samples)

    def times(self) -> FloatArray:
        """Timestamps, oldest first."""
        return np.array([s.t for s in self._samples], dtype=float)

    def states(self) -> FloatArray:
        """States as a (n, N) matrix."""
        return np.column_stack([s.x for s in self._samples])

    def controls(self) -> FloatArray:
        """Controls as a (m, N) matrix."""
        return np.column_stack([s.u for s in self._samples])

    def mean_dt(self) -> float:
        """Mean sample spacing (t_last - t_first) / (N - 1).

        Raises:
            InputError: If fewer than two samples are stored
        """
        if len(self._samples) < 2:
            raise InputError(
                f"Mean sample spacing needs 2 samples, buffer has {len(self)}"
            )
        return (self._samples[-1].t - self._samples[0].t) / (len(self._samples) - 1)

    def resample(self, dt: float) -> ResampledData:
        """Interpolate every coordinate and evaluate on a uniform grid.

        The grid starts at the first timestamp and ends at the last grid time
        not after the newest sample, so nothing is extrapolated.

        Args:
            dt: Grid step in seconds

        Returns:
            Shifted snapshot matrices on the uniform grid

        Raises:
            IdentificationError: If the buffer is too short for the grid
        """
        if not dt > 0:
            raise InputError(f"Resampling step must be positive, got {dt}")
        if len(self._samples) < MIN_RESAMPLE_SAMPLES:
            raise IdentificationError(
                f"Resampling needs {MIN_RESAMPLE_SAMPLES} samples, "
                f"buffer has {len(self)}"
            )

        times = self.times()
        span = times[-1] - times[0]
        if span < 2 * dt:
            raise IdentificationError(
                f"Buffer spans {span:.6g} s, less than two steps of {dt:.6g} s"
            )

        states = self.states()
        controls = self.controls()
        n = states.shape[0]

        n_grid = int(np.floor(span / dt + _GRID_EPS)) + 1
        grid = times[0] + dt * np.arange(n_grid)
        grid[-1] = min(grid[-1], times[-1])

        interpolant = pchip_coefficients(times, np.vstack([states, controls]))
        values = interpolant(grid)

        logger.debug(
            "Resampled %d samples onto %d grid points (dt=%.6g)",
            len(self),
            n_grid,
            dt,
        )
        return ResampledData(
            X=values[:n, :-1],
            Xbar=values[:n, 1:],
            U=values[n:, :-1],
            dt=dt,
        )

