"""
Fully discrete distributed optimal control of the
diffusion-convection-reaction equation.

  minimize  sum_m k [ 1/2 |ybar_m - ybar_d,m|^2_M + alpha/2 |ubar_m|^2_M ]
  subject to the Crank-Nicolson SIPG state equation,

solved in reduced form (control only) by Newton-CG. The same driver runs
on the full system and on Galerkin-projected reduced systems.
"""

import logging
import threading
from dataclasses import dataclass

import numpy as np

from app.discretization.fields import DGSpace, assemble_load, l2_project, velocity_from_name
from app.discretization.sipg import (
    DGConfig,
    assemble_mass,
    assemble_sipg,
    assemble_sipg_epsilon_derivative,
)
from app.errors import ConfigurationError
from app.models.mesh import build_uniform_mesh, classify_edges
from app.models.trajectory import Trajectory, TrajectoryKind
from app.solver.optimizer import NewtonCG, OptimizeStats
from app.solver.system import SpaceTimeSystem

logger = logging.getLogger("sensipod.solver.ocp")


class OCPSetup:
    """Problem data, discretization and time grid of one optimal control problem"""

    def __init__(self, space, dg, alpha=1.0, final_time=1.0, n_steps=60,
                 source=0.0, target=0.0, initial=0.0):
        """
        Initialize the setup.
        source, target and initial are constants or functions g(x, y, t).
        """
        if int(n_steps) != n_steps or n_steps < 1:
            raise ConfigurationError(f"Number of time steps must be a positive integer, got {n_steps}")
        if not alpha > 0.0:
            raise ConfigurationError(f"Regularization alpha must be positive, got {alpha}")
        if not final_time > 0.0:
            raise ConfigurationError(f"Final time must be positive, got {final_time}")
        dg.validate(space.degree)

        self.space = space
        self.dg = dg
        self.alpha = float(alpha)
        self.final_time = float(final_time)
        self.n_steps = int(n_steps)
        self.source = source
        self.target = target
        self.initial = initial

        self._lock = threading.Lock()
        self._system = None
        self._derivatives = {}
        self._classification = None

    @classmethod
    def from_config(cls, config, epsilon=None, space=None):
        """Build a setup from a Config, optionally overriding epsilon"""
        problem = config.get("problem")
        disc = config.get("discretization")
        if space is None:
            space = DGSpace(build_uniform_mesh(disc["subdivisions"]), int(disc["degree"]))
        try:
            beta = velocity_from_name(problem["velocity"])
        except ValueError as e:
            raise ConfigurationError(str(e)) from e
        dg = DGConfig(
            epsilon=float(problem["epsilon"] if epsilon is None else epsilon),
            beta=beta,
            reaction=float(problem["reaction"]),
            sigma=disc["sigma"],
        )
        return cls(
            space, dg,
            alpha=float(problem["alpha"]),
            final_time=float(problem["final_time"]),
            n_steps=int(disc["time_steps"]),
            source=problem["source"],
            target=problem["target"],
            initial=problem["initial"],
        )

    @property
    def k(self):
        """Time step T / N"""
        return self.final_time / self.n_steps

    @property
    def times(self):
        """Time levels t_0 .. t_N"""
        return self.k * np.arange(self.n_steps + 1)

    @property
    def epsilon(self):
        """Diffusion coefficient"""
        return self.dg.epsilon

    @property
    def classification(self):
        """Inflow/outflow classification of the mesh edges"""
        if self._classification is None:
            self._classification = classify_edges(self.space.mesh, self.dg.beta)
        return self._classification

    def with_epsilon(self, epsilon):
        """Setup sharing space and data with another diffusion coefficient"""
        return OCPSetup(
            self.space, self.dg.with_epsilon(epsilon),
            alpha=self.alpha, final_time=self.final_time, n_steps=self.n_steps,
            source=self.source, target=self.target, initial=self.initial,
        )

    def _level_loads(self, g):
        """Load vectors of g at every time level -> (N+1, n)"""
        if not callable(g):
            return np.tile(assemble_load(self.space, g), (self.n_steps + 1, 1))
        return np.stack([assemble_load(self.space, g, t) for t in self.times])

    def _target_energy(self, mass):
        """ybar_d^T M ybar_d per interval from level projections of the target"""
        if callable(self.target):
            levels = np.stack([l2_project(self.space, self.target, t) for t in self.times])
        else:
            levels = np.tile(l2_project(self.space, self.target), (self.n_steps + 1, 1))
        bar = 0.5 * (levels[:-1] + levels[1:])
        return np.sum(bar * np.asarray((mass @ bar.T).T), axis=1)

    @property
    def system(self):
        """Assembled space-time system, built on first use"""
        with self._lock:
            if self._system is None:
                mass = assemble_mass(self.space)
                operator = assemble_sipg(self.space, self.dg, self.classification)
                self._system = SpaceTimeSystem(
                    mass, operator, self.k, self.alpha,
                    source_loads=self._level_loads(self.source),
                    target_loads=self._level_loads(self.target),
                    target_energy=self._target_energy(mass),
                    initial=l2_project(self.space, self.initial, 0.0),
                )
                logger.info(
                    f"Assembled system: {self.space.n_dofs} DoF, N={self.n_steps}, "
                    f"eps={self.epsilon:.4g}"
                )
            return self._system

    def derivative_operator(self, volume_only=False):
        """Derivative of the SIPG matrix in epsilon"""
        with self._lock:
            if volume_only not in self._derivatives:
                self._derivatives[volume_only] = assemble_sipg_epsilon_derivative(
                    self.space, self.dg, volume_only=volume_only
                )
            return self._derivatives[volume_only]


class OptimalControlProblem:
    """
    Reduced cost of a space-time system with optional affine forcings.

    state_forcing (N, n) is added to every state step and adjoint_forcing
    (N, n) to every adjoint step; the cost then carries the term
    -sum_m adjoint_forcing_m^T ybar_m so that alpha u - p stays its gradient.
    """

    def __init__(self, system, state_forcing=None, adjoint_forcing=None):
        """Initialize from a SpaceTimeSystem"""
        self.system = system
        self.state_forcing = state_forcing
        self.adjoint_forcing = adjoint_forcing
        self._homogeneous = None

    @property
    def homogeneous_system(self):
        """Data-free copy used by Hessian products"""
        if self._homogeneous is None:
            self._homogeneous = self.system.homogeneous()
        return self._homogeneous

    def solve_state(self, control):
        """State levels for a control"""
        return self.system.solve_state(control, self.state_forcing)

    def solve_adjoint(self, state):
        """Adjoint levels for a state"""
        return self.system.solve_adjoint(state, self.adjoint_forcing)

    def cost(self, state, control):
        """Value of the reduced cost for a state/control pair"""
        value = self.system.tracking_cost(state) + self.system.control_cost(control)
        if self.adjoint_forcing is not None:
            ybar = 0.5 * (state[:-1] + state[1:])
            value -= float(np.sum(self.adjoint_forcing * ybar))
        return value

    # Optimizer interface

    def objective(self, control):
        state = self.solve_state(control)
        return self.cost(state, control), state

    def gradient(self, control, state=None):
        """alpha u - p for the state belonging to the control"""
        if state is None:
            state = self.solve_state(control)
        return self.system.alpha * control - self.solve_adjoint(state)

    def hessian_vector(self, direction):
        """alpha v - dp(v) with dy, dp from data-free sweeps"""
        hom = self.homogeneous_system
        d_state = hom.solve_state(direction)
        d_adjoint = hom.solve_adjoint(d_state)
        return self.system.alpha * direction - d_adjoint

    def inner(self, a, b):
        return self.system.inner(a, b)

    def norm(self, a):
        return self.system.norm(a)

    def pairing(self, a, b):
        return self.system.pairing(a, b)

    def optimality_residual(self, state, control, adjoint):
        """
        Residuals of the discrete optimality system.
        Returns relative state and adjoint residuals and |alpha u - p|_W.
        """
        system = self.system
        k = system.k

        my = system.apply_mass(state)
        ay = system.apply_operator(state)
        implicit = my[1:] + 0.5 * k * ay[1:]
        explicit = my[:-1] - 0.5 * k * ay[:-1]
        rhs = system.state_rhs(control, self.state_forcing)
        r_state = _relative(
            [implicit - explicit - rhs, state[0] - system.initial],
            [implicit, explicit, rhs, state[0], system.initial],
        )

        mp = system.apply_mass(adjoint)
        ap = system.apply_operator(adjoint, transpose=True)
        implicit = mp[:-1] + 0.5 * k * ap[:-1]
        explicit = mp[1:] - 0.5 * k * ap[1:]
        rhs = system.adjoint_rhs(state, self.adjoint_forcing)
        r_adjoint = _relative(
            [implicit - explicit - rhs, adjoint[-1]],
            [implicit, explicit, rhs],
        )

        r_gradient = system.norm(system.alpha * control - adjoint)
        return r_state, r_adjoint, r_gradient

    def solve(self, u_init=None, **options):
        """Run Newton-CG; returns (y, u, p, stats) as arrays"""
        if u_init is None:
            u_init = np.zeros(self.system.shape)
        driver = NewtonCG(**options)
        control, _, stats = driver.minimize(self, u_init)

        # Consistent triple at the returned control
        state = self.solve_state(control)
        adjoint = self.solve_adjoint(state)
        return state, control, adjoint, stats


def _relative(residuals, scales):
    """Euclidean norm of residual blocks relative to the norm of the terms"""
    res = np.sqrt(sum(float(np.sum(np.square(r))) for r in residuals))
    scale = np.sqrt(sum(float(np.sum(np.square(s))) for s in scales))
    return float(res / scale) if scale > 0.0 else float(res)


@dataclass
class OptimalSolution:
    """Converged (or best) optimality triple with optimizer statistics"""

    y: Trajectory
    u: Trajectory
    p: Trajectory
    stats: OptimizeStats

    def __iter__(self):
        return iter((self.y, self.u, self.p, self.stats))

    @property
    def converged(self):
        """True if the optimizer met its tolerance"""
        return self.stats.converged


def _system_of(setup):
    """SpaceTimeSystem of an OCPSetup, or the argument itself"""
    return setup.system if isinstance(setup, OCPSetup) else setup


def _values(trajectory):
    return trajectory.values if isinstance(trajectory, Trajectory) else np.asarray(trajectory)


def _wrap(system, values, kind):
    return Trajectory(values, system.k, kind)


# Public operations on setups

def solve_state(setup, u):
    """Crank-Nicolson state trajectory for a control trajectory"""
    system = _system_of(setup)
    return _wrap(system, OptimalControlProblem(system).solve_state(_values(u)), TrajectoryKind.STATE)


def solve_adjoint(setup, y):
    """Crank-Nicolson adjoint trajectory for a state trajectory, p_N = 0"""
    system = _system_of(setup)
    return _wrap(system, OptimalControlProblem(system).solve_adjoint(_values(y)), TrajectoryKind.ADJOINT)


def cost(setup, y, u):
    """Reduced cost of a state/control pair"""
    return OptimalControlProblem(_system_of(setup)).cost(_values(y), _values(u))


def reduced_gradient(setup, u):
    """alpha u - p after a state and an adjoint sweep"""
    system = _system_of(setup)
    g = OptimalControlProblem(system).gradient(_values(u))
    return _wrap(system, g, TrajectoryKind.CONTROL)


def hessian_vector(setup, du):
    """Reduced Hessian applied to a control direction"""
    system = _system_of(setup)
    h = OptimalControlProblem(system).hessian_vector(_values(du))
    return _wrap(system, h, TrajectoryKind.CONTROL)


def optimality_residual(setup, y, u, p):
    """(r_state, r_adjoint, r_gradient) of a candidate triple"""
    problem = OptimalControlProblem(_system_of(setup))
    return problem.optimality_residual(_values(y), _values(u), _values(p))


def gradient_check(setup, u=None, directions=3, delta=1e-3, seed=0):
    """
    Relative errors of central differences of the cost against <g, v>_C
    for random directions v drawn from a seeded generator.
    """
    system = _system_of(setup)
    problem = OptimalControlProblem(system)
    rng = np.random.default_rng(seed)
    control = np.zeros(system.shape) if u is None else _values(u)
    gradient = problem.gradient(control)

    errors = np.empty(int(directions))
    for i in range(len(errors)):
        v = rng.standard_normal(system.shape)
        plus, _ = problem.objective(control + delta * v)
        minus, _ = problem.objective(control - delta * v)
        fd = (plus - minus) / (2.0 * delta)
        exact = problem.pairing(gradient, v)
        errors[i] = abs(fd - exact) / max(abs(exact), np.finfo(float).tiny)
    logger.debug(
        f"Gradient check over {len(errors)} directions (seed {seed}): "
        f"max error {errors.max(initial=0.0):.3e}"
    )
    return errors


def optimize(setup, u_init=None, tol=1e-8, max_iter=30, **options):
    """Solve the optimal control problem by Newton-CG with Armijo line search"""
    system = _system_of(setup)
    problem = OptimalControlProblem(system)
    init = None if u_init is None else _values(u_init)
    state, control, adjoint, stats = problem.solve(init, tol=tol, max_iter=max_iter, **options)
    return OptimalSolution(
        _wrap(system, state, TrajectoryKind.STATE),
        _wrap(system, control, TrajectoryKind.CONTROL),
        _wrap(system, adjoint, TrajectoryKind.ADJOINT),
        stats,
    )
