"""
Sweep models for sensipod.
Configuration of a parameter sweep and the records it produces.
"""

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

from app.errors import ConfigurationError

# Column order of emitted result tables; the first eight are always present
CORE_COLUMNS = [
    "epsilon", "method", "kind", "l", "state_err", "control_err", "t_reduced", "t_full",
]
RECORD_COLUMNS = CORE_COLUMNS + ["rank", "sensitivity_seconds", "converged", "error"]
TIMING_COLUMNS = ["t_reduced", "t_full", "sensitivity_seconds"]


@dataclass
class SweepConfig:
    """Protocol of one parameter sweep"""

    subdivisions: int = 40
    time_steps: int = 60
    epsilon: float = 1.0e-2
    grid: List[float] = field(default_factory=lambda: [1.0 / r for r in range(80, 125, 5)])
    methods: List[str] = field(default_factory=lambda: ["BPOD", "ExtPOD", "ExpPOD", "SAIM"])
    kinds: List[str] = field(default_factory=lambda: ["Y", "P", "YP"])
    gamma: Optional[float] = None
    rank: Optional[int] = 9
    # Fixed ranks of an error-vs-rank sweep; replaces rank and gamma when set
    ranks: Optional[List[int]] = None
    saim_anchors: Tuple[float, float] = (1.0 / 125.0, 1.0 / 75.0)
    delta_mu: Optional[float] = None
    sensitivity_method: str = "FD"
    output_dir: str = "results"
    jobs: int = 1
    seed: int = 0
    gradient_checks: int = 3

    def validate(self):
        """Raise ConfigurationError for an inconsistent sweep"""
        if self.subdivisions < 1 or self.time_steps < 1:
            raise ConfigurationError("Mesh subdivisions and time steps must be positive")
        if not self.epsilon > 0.0:
            raise ConfigurationError(f"Nominal epsilon must be positive, got {self.epsilon}")
        if not self.grid or any(not eps > 0.0 for eps in self.grid):
            raise ConfigurationError("Sweep grid values must be positive")
        if self.ranks is not None:
            if not self.ranks or any(int(r) != r or r < 1 for r in self.ranks):
                raise ConfigurationError(f"Rank axis must hold positive integers, got {self.ranks}")
            if len(set(self.ranks)) != len(self.ranks):
                raise ConfigurationError(f"Rank axis has repeated values: {self.ranks}")
        else:
            if (self.gamma is None) == (self.rank is None):
                raise ConfigurationError("Specify exactly one of gamma and rank")
            if self.gamma is not None and not 0.0 < self.gamma < 1.0:
                raise ConfigurationError(f"gamma must lie in (0, 1), got {self.gamma}")
            if self.rank is not None and self.rank < 1:
                raise ConfigurationError(f"rank must be positive, got {self.rank}")
        if self.sensitivity_method not in ("FD", "CSE"):
            raise ConfigurationError(f"Sensitivity method must be FD or CSE, got {self.sensitivity_method}")
        if self.jobs < 1:
            raise ConfigurationError(f"jobs must be positive, got {self.jobs}")
        if self.gradient_checks < 0:
            raise ConfigurationError(f"gradient_checks must be non-negative, got {self.gradient_checks}")
        if "SAIM" in self.methods:
            low, high = sorted(self.saim_anchors)
            if low == high or not all(low <= eps <= high for eps in self.grid):
                raise ConfigurationError(
                    f"SAIM anchors {self.saim_anchors} must bracket the sweep grid"
                )
        return self

    def rank_rules(self):
        """(rank, gamma) pairs selecting the baseline bases, one per point of the rank axis"""
        if self.ranks is not None:
            return [(int(r), None) for r in self.ranks]
        return [(self.rank, self.gamma)]


@dataclass
class SweepRecord:
    """One benchmark row"""

    epsilon: float
    method: str
    kind: str
    l: int
    state_err: float = math.nan
    control_err: float = math.nan
    t_reduced: float = math.nan
    t_full: float = math.nan
    rank: Optional[int] = None
    sensitivity_seconds: float = math.nan
    converged: bool = True
    error: Optional[str] = None

    def __post_init__(self):
        # Baseline rank defaults to the basis size
        if self.rank is None:
            self.rank = self.l

    @property
    def failed(self):
        """True if the cell raised"""
        return self.error is not None

    @property
    def usable(self):
        """True if both solves converged and the cell did not raise"""
        return self.converged and not self.failed

    def sort_key(self):
        return (self.epsilon, self.method, self.kind, self.rank)

    def to_row(self):
        """Row of the emitted table"""
        row = asdict(self)
        return {key: row[key] for key in RECORD_COLUMNS}
