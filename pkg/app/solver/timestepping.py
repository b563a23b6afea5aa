"""
Crank-Nicolson time stepping.
Factorizes M + (k/2) A once and reuses it for every forward (state) and
backward (adjoint) sweep.
"""

import logging
import warnings

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from app.errors import SolverError

logger = logging.getLogger("sensipod.solver.timestepping")


class CrankNicolson:
    """Forward and backward Crank-Nicolson sweeps for a fixed operator"""

    def __init__(self, mass, operator, k):
        """Initialize and factorize the implicit matrix"""
        self.k = float(k)
        self.sparse = sp.issparse(mass) or sp.issparse(operator)

        if self.sparse:
            mass = sp.csc_matrix(mass)
            operator = sp.csc_matrix(operator)
            implicit = (mass + 0.5 * self.k * operator).tocsc()
            self.explicit = (mass - 0.5 * self.k * operator).tocsr()
            self.explicit_t = self.explicit.T.tocsr()
            try:
                self._lu = splu(implicit)
            except RuntimeError as e:
                raise SolverError(f"Crank-Nicolson matrix is singular: {e}") from e
        else:
            mass = np.asarray(mass, dtype=float)
            operator = np.asarray(operator, dtype=float)
            implicit = mass + 0.5 * self.k * operator
            self.explicit = mass - 0.5 * self.k * operator
            self.explicit_t = self.explicit.T.copy()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", la.LinAlgWarning)
                self._lu = la.lu_factor(implicit)
            if np.any(np.diag(self._lu[0]) == 0.0):
                raise SolverError("Crank-Nicolson matrix is singular")

        self.dim = implicit.shape[0]
        logger.debug(f"Crank-Nicolson factorization ready: dim={self.dim}, sparse={self.sparse}")

    def _solve(self, rhs, transpose):
        if self.sparse:
            return self._lu.solve(rhs, trans="T" if transpose else "N")
        return la.lu_solve(self._lu, rhs, trans=1 if transpose else 0)

    def forward(self, initial, rhs):
        """
        March y_{m+1} = P^{-1} [(M - k/2 A) y_m + rhs_m] for m = 0 .. N-1.
        rhs has shape (N, n); returns levels (N+1, n).
        """
        n_steps = rhs.shape[0]
        levels = np.empty((n_steps + 1, self.dim))
        levels[0] = initial
        for m in range(n_steps):
            levels[m + 1] = self._solve(self.explicit @ levels[m] + rhs[m], transpose=False)
            if not np.all(np.isfinite(levels[m + 1])):
                raise SolverError("State sweep produced non-finite values", step=m + 1)
        return levels

    def backward(self, rhs, terminal=None):
        """
        March p_m = P^{-T} [(M - k/2 A)^T p_{m+1} + rhs_m] for m = N-1 .. 0.
        p_N is zero unless a terminal value is given.
        """
        n_steps = rhs.shape[0]
        levels = np.empty((n_steps + 1, self.dim))
        levels[n_steps] = 0.0 if terminal is None else terminal
        for m in range(n_steps - 1, -1, -1):
            levels[m] = self._solve(self.explicit_t @ levels[m + 1] + rhs[m], transpose=True)
            if not np.all(np.isfinite(levels[m])):
                raise SolverError("Adjoint sweep produced non-finite values", step=m)
        return levels
