"""
Exception types for sensipod.
Each error also derives from the closest builtin so callers may catch either.
"""


class SensipodError(Exception):
    """Base class for all sensipod errors"""


class ConfigurationError(SensipodError, ValueError):
    """Invalid problem, solver or sweep configuration"""


class MeshError(SensipodError, ValueError):
    """Invalid mesh request"""


class SolverError(SensipodError, RuntimeError):
    """A linear solve failed during time stepping"""

    def __init__(self, message, step=None):
        """Initialize with the failing time step, if known"""
        if step is not None:
            message = f"{message} (time step {step})"
        super().__init__(message)
        self.step = step


class RankDeficiencyError(SensipodError, ValueError):
    """Requested POD rank exceeds the numerical rank of the snapshots"""

    def __init__(self, requested, achievable_rank):
        """Initialize with requested and achievable ranks"""
        super().__init__(
            f"requested {requested} POD modes but the snapshot matrix has "
            f"numerical rank {achievable_rank}"
        )
        self.requested = requested
        self.achievable_rank = achievable_rank


class ClusteredSpectrumError(SensipodError, ValueError):
    """Retained singular values are not simple"""


class DependentBasisError(SensipodError, ValueError):
    """Basis columns are numerically linearly dependent"""

    def __init__(self, message, column=None):
        """Initialize with the offending column index, if known"""
        super().__init__(message)
        self.column = column


class ReducedModelError(SensipodError, RuntimeError):
    """Galerkin projection produced a singular reduced system"""
