"""
Newton-CG with Armijo backtracking for linear-quadratic reduced costs.

The driver is written against a small problem interface:
  objective(u) -> (cost, cache)
  gradient(u, cache) -> g
  hessian_vector(v) -> H v
  inner(a, b), norm(a)  (metric for CG and the stopping test)
  pairing(a, b)         (pairing in which the cost is differentiated)
"""

import time
import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

logger = logging.getLogger("sensipod.solver.optimizer")


@dataclass
class OptimizeStats:
    """History of one optimizer run"""

    iterations: int = 0
    costs: List[float] = field(default_factory=list)
    gradient_norms: List[float] = field(default_factory=list)
    cg_iterations: List[int] = field(default_factory=list)
    backtracks: List[int] = field(default_factory=list)
    wall_time: float = 0.0
    converged: bool = False

    @property
    def final_gradient_norm(self):
        """Last recorded gradient norm"""
        return self.gradient_norms[-1] if self.gradient_norms else float("nan")

    def to_dict(self):
        """Summary as a dictionary"""
        return {
            "iterations": self.iterations,
            "cost": self.costs[-1] if self.costs else float("nan"),
            "gradient_norm": self.final_gradient_norm,
            "cg_iterations": int(sum(self.cg_iterations)),
            "wall_time": self.wall_time,
            "converged": self.converged,
        }


class NewtonCG:
    """Inexact Newton method with conjugate gradient inner solves"""

    def __init__(self, tol=1e-8, max_iter=30, cg_tol=None, cg_max_iter=200,
                 armijo_c=1e-4, backtrack=0.5, max_backtracks=30):
        """Initialize the driver parameters"""
        if not tol > 0.0:
            raise ValueError(f"Tolerance must be positive, got {tol}")
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        self.cg_tol = cg_tol
        self.cg_max_iter = int(cg_max_iter)
        self.armijo_c = float(armijo_c)
        self.backtrack = float(backtrack)
        self.max_backtracks = int(max_backtracks)

    def forcing(self, gradient_norm):
        """Relative tolerance of the inner CG solve"""
        if self.cg_tol is not None:
            return float(self.cg_tol)
        return min(0.5, float(np.sqrt(gradient_norm)))

    def conjugate_gradient(self, problem, gradient, gradient_norm):
        """Approximately solve H d = -g; returns (d, iterations)"""
        direction = np.zeros_like(gradient)
        residual = -gradient
        search = residual.copy()
        rr = problem.inner(residual, residual)
        target = self.forcing(gradient_norm) * np.sqrt(rr)

        iterations = 0
        while iterations < self.cg_max_iter and np.sqrt(rr) > target:
            h_search = problem.hessian_vector(search)
            curvature = problem.inner(search, h_search)
            if curvature <= 0.0:
                logger.warning(f"Non-positive curvature {curvature:.3e} in CG; stopping inner solve")
                if iterations == 0:
                    direction = -gradient
                break
            step = rr / curvature
            direction += step * search
            residual -= step * h_search
            rr_new = problem.inner(residual, residual)
            search = residual + (rr_new / rr) * search
            rr = rr_new
            iterations += 1

        return direction, iterations

    def minimize(self, problem, u0):
        """
        Minimize the reduced cost from u0.
        Returns (u, cache, stats); cache belongs to the returned u.
        """
        started = time.perf_counter()
        stats = OptimizeStats()

        u = np.array(u0, dtype=float)
        cost, cache = problem.objective(u)
        gradient = problem.gradient(u, cache)
        stats.costs.append(cost)

        while True:
            gradient_norm = problem.norm(gradient)
            stats.gradient_norms.append(gradient_norm)
            relative = gradient_norm / (1.0 + problem.norm(u))
            logger.debug(
                f"Newton iteration {stats.iterations}: J={cost:.10e}, |g|={gradient_norm:.3e}, "
                f"relative={relative:.3e}"
            )
            if relative <= self.tol:
                stats.converged = True
                break
            if stats.iterations >= self.max_iter:
                break

            direction, cg_count = self.conjugate_gradient(problem, gradient, gradient_norm)
            stats.cg_iterations.append(cg_count)

            slope = problem.pairing(gradient, direction)
            if slope >= 0.0:
                logger.debug("Newton direction is not a descent direction; using steepest descent")
                direction = -gradient
                slope = problem.pairing(gradient, direction)
                if slope >= 0.0:
                    logger.warning("No descent direction available; stopping")
                    break

            # Armijo backtracking
            step = 1.0
            accepted = False
            for attempt in range(self.max_backtracks + 1):
                trial = u + step * direction
                trial_cost, trial_cache = problem.objective(trial)
                if trial_cost <= cost + self.armijo_c * step * slope:
                    accepted = True
                    break
                step *= self.backtrack
            stats.backtracks.append(attempt)
            if not accepted:
                logger.warning("Armijo line search failed; returning the current iterate")
                break

            u, cost, cache = trial, trial_cost, trial_cache
            gradient = problem.gradient(u, cache)
            stats.costs.append(cost)
            stats.iterations += 1

        stats.wall_time = time.perf_counter() - started
        if stats.converged:
            logger.info(
                f"Newton-CG converged in {stats.iterations} iterations "
                f"({sum(stats.cg_iterations)} CG), J={cost:.8e}"
            )
        else:
            logger.warning(
                f"Newton-CG stopped after {stats.iterations} iterations without convergence, "
                f"|g|={stats.final_gradient_norm:.3e}"
            )
        return u, cache, stats
