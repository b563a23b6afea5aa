"""
Trajectory model for sensipod.
Time-indexed DoF vectors on a uniform Crank-Nicolson time grid.
"""

from enum import Enum

import numpy as np


class TrajectoryKind(Enum):
    """What a trajectory represents"""
    STATE = "state"
    ADJOINT = "adjoint"
    CONTROL = "control"
    STATE_SENSITIVITY = "state_sensitivity"
    ADJOINT_SENSITIVITY = "adjoint_sensitivity"
    CONTROL_SENSITIVITY = "control_sensitivity"


class Trajectory:
    """Sequence of N+1 coefficient vectors y_0 .. y_N with time step k"""

    def __init__(self, values, k, kind=TrajectoryKind.STATE):
        """Initialize from an array of shape (N+1, n)"""
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 2:
            raise ValueError(f"Trajectory values must have shape (N+1, n) with N >= 1, got {values.shape}")
        if not k > 0.0:
            raise ValueError(f"Time step must be positive, got {k}")
        self.values = values
        self.k = float(k)
        self.kind = TrajectoryKind(kind)

    @classmethod
    def zeros(cls, n_steps, dim, k, kind=TrajectoryKind.CONTROL):
        """Zero trajectory with n_steps steps in dimension dim"""
        return cls(np.zeros((n_steps + 1, dim)), k, kind)

    @property
    def n_steps(self):
        """Number of time steps N"""
        return self.values.shape[0] - 1

    @property
    def dim(self):
        """Dimension of each level"""
        return self.values.shape[1]

    @property
    def final_time(self):
        """T = N k"""
        return self.n_steps * self.k

    @property
    def times(self):
        """Time levels t_0 .. t_N"""
        return self.k * np.arange(self.n_steps + 1)

    def __getitem__(self, m):
        return self.values[m]

    def __len__(self):
        return self.values.shape[0]

    def copy(self):
        """Deep copy"""
        return Trajectory(self.values.copy(), self.k, self.kind)

    def with_values(self, values, kind=None):
        """Trajectory on the same grid with new values"""
        return Trajectory(values, self.k, self.kind if kind is None else kind)

    def midpoints(self):
        """Interval averages (y_m + y_{m+1}) / 2 -> (N, n)"""
        return 0.5 * (self.values[:-1] + self.values[1:])

    def lift(self, basis):
        """Map reduced coefficients to the full space through basis columns"""
        return self.with_values(self.values @ np.asarray(basis).T)

    def check_compatible(self, other):
        """Raise ValueError if two trajectories do not share a grid"""
        if self.values.shape != other.values.shape:
            raise ValueError(f"Trajectory shapes differ: {self.values.shape} vs {other.values.shape}")
        if not np.isclose(self.k, other.k, rtol=1e-12, atol=0.0):
            raise ValueError(f"Trajectory time steps differ: {self.k} vs {other.k}")

    def _coerce(self, other):
        if isinstance(other, Trajectory):
            self.check_compatible(other)
            return other.values
        return other

    def __add__(self, other):
        return self.with_values(self.values + self._coerce(other))

    def __sub__(self, other):
        return self.with_values(self.values - self._coerce(other))

    def __mul__(self, scalar):
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self.with_values(self.values / scalar)

    def __neg__(self):
        return self.with_values(-self.values)

    def __repr__(self):
        return f"Trajectory(kind={self.kind.value}, N={self.n_steps}, dim={self.dim}, k={self.k:g})"
