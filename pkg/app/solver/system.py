"""
Space-time algebraic form of the discrete optimal control problem.

A SpaceTimeSystem holds the mass matrix, the spatial operator and the
time-level loads of the source and the target, and provides the two
time pairings used by the optimizer:

  <a, b>_C = sum_m k abar_m^T M bbar_m        (interval averages)
  <a, b>_W = <a, b>_C + (k/4) a_N^T M b_N

The cost is exactly differentiated in <.,.>_C; <.,.>_W is the inner
product in which the reduced Hessian is symmetric positive definite.
"""

import logging

import numpy as np

from app.solver.timestepping import CrankNicolson

logger = logging.getLogger("sensipod.solver.system")


class SpaceTimeSystem:
    """Operators and data of a full or reduced optimality system"""

    def __init__(self, mass, operator, k, alpha, source_loads, target_loads,
                 target_energy, initial):
        """
        Initialize from
        mass, operator: (n, n) sparse or dense
        source_loads, target_loads: (N+1, n) arrays of M f_m and M y_d,m
        target_energy: (N,) values ybar_d^T M ybar_d per interval
        initial: (n,) initial coefficients
        """
        self.mass = mass
        self.operator = operator
        self.k = float(k)
        self.alpha = float(alpha)
        self.source_loads = np.asarray(source_loads, dtype=float)
        self.target_loads = np.asarray(target_loads, dtype=float)
        self.target_energy = np.asarray(target_energy, dtype=float)
        self.initial = np.asarray(initial, dtype=float)
        self._stepper = None

    @property
    def n_steps(self):
        """Number of time steps N"""
        return self.source_loads.shape[0] - 1

    @property
    def dim(self):
        """Spatial dimension"""
        return self.mass.shape[0]

    @property
    def shape(self):
        """Shape (N+1, n) of every trajectory array"""
        return (self.n_steps + 1, self.dim)

    @property
    def stepper(self):
        """Lazily factorized Crank-Nicolson stepper"""
        if self._stepper is None:
            self._stepper = CrankNicolson(self.mass, self.operator, self.k)
        return self._stepper

    def homogeneous(self):
        """The same system with zero source, target and initial data"""
        system = SpaceTimeSystem(
            self.mass, self.operator, self.k, self.alpha,
            np.zeros_like(self.source_loads), np.zeros_like(self.target_loads),
            np.zeros_like(self.target_energy), np.zeros_like(self.initial),
        )
        system._stepper = self.stepper
        return system

    # Linear algebra helpers

    def apply_mass(self, levels):
        """M applied to every level of an (L, n) array"""
        return np.asarray((self.mass @ np.asarray(levels).T).T)

    def apply_operator(self, levels, transpose=False):
        """A or A^T applied to every level of an (L, n) array"""
        op = self.operator.T if transpose else self.operator
        return np.asarray((op @ np.asarray(levels).T).T)

    def pairing(self, a, b):
        """Interval-average pairing <a, b>_C"""
        abar = 0.5 * (a[:-1] + a[1:])
        bbar = 0.5 * (b[:-1] + b[1:])
        return float(self.k * np.sum(abar * self.apply_mass(bbar)))

    def inner(self, a, b):
        """Control inner product <a, b>_W"""
        terminal = float(a[-1] @ (self.mass @ b[-1]))
        return self.pairing(a, b) + 0.25 * self.k * terminal

    def norm(self, a):
        """Norm induced by <.,.>_W"""
        return float(np.sqrt(max(self.inner(a, a), 0.0)))

    # Sweeps

    def state_rhs(self, control, forcing=None):
        """Per-step right-hand sides (N, n) of the state sweep"""
        loads = self.source_loads + self.apply_mass(control)
        rhs = 0.5 * self.k * (loads[:-1] + loads[1:])
        if forcing is not None:
            rhs = rhs + forcing
        return rhs

    def adjoint_rhs(self, state, forcing=None):
        """Per-step right-hand sides (N, n) of the adjoint sweep"""
        residual = self.apply_mass(state) - self.target_loads
        rhs = -0.5 * self.k * (residual[:-1] + residual[1:])
        if forcing is not None:
            rhs = rhs + forcing
        return rhs

    def solve_state(self, control, forcing=None):
        """Crank-Nicolson state levels for a control array (N+1, n)"""
        return self.stepper.forward(self.initial, self.state_rhs(control, forcing))

    def solve_adjoint(self, state, forcing=None):
        """Crank-Nicolson adjoint levels with p_N = 0"""
        return self.stepper.backward(self.adjoint_rhs(state, forcing))

    def tracking_cost(self, state):
        """sum_m k/2 |ybar_m - ybar_d,m|^2_M"""
        ybar = 0.5 * (state[:-1] + state[1:])
        target_bar = 0.5 * (self.target_loads[:-1] + self.target_loads[1:])
        per_interval = (
            np.sum(ybar * self.apply_mass(ybar), axis=1)
            - 2.0 * np.sum(ybar * target_bar, axis=1)
            + self.target_energy
        )
        return float(0.5 * self.k * np.sum(per_interval))

    def control_cost(self, control):
        """sum_m k alpha/2 |ubar_m|^2_M"""
        return 0.5 * self.alpha * self.pairing(control, control)

    def project(self, basis):
        """
        Galerkin projection onto the columns of basis (n, l).
        The reduced initial value is the M-orthogonal projection of the full one.
        """
        basis = np.asarray(basis, dtype=float)
        mass_basis = np.asarray(self.mass @ basis)
        reduced_mass = basis.T @ mass_basis
        reduced_operator = basis.T @ np.asarray(self.operator @ basis)
        initial = np.linalg.solve(reduced_mass, mass_basis.T @ self.initial)
        return {
            "mass": reduced_mass,
            "operator": reduced_operator,
            "source_loads": self.source_loads @ basis,
            "target_loads": self.target_loads @ basis,
            "target_energy": self.target_energy.copy(),
            "initial": initial,
        }
