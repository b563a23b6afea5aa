"""
Parameter sensitivities of optimal trajectories and of POD bases.

Trajectory sensitivities come from the sensitivity optimality system (CSE)
or from centred differences of two optimizer runs (FD). They are pushed
through the weighted SVD to obtain the derivative of the POD coefficients.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as la

from app.errors import ClusteredSpectrumError, ConfigurationError
from app.models.trajectory import Trajectory, TrajectoryKind
from app.reduction.pod import SnapshotKind, build_snapshots
from app.solver.ocp import OptimalControlProblem, optimize

logger = logging.getLogger("sensipod.reduction.sensitivity")


@dataclass
class SensitivityTriple:
    """Derivatives of the optimal state, adjoint and control in mu"""

    s_y: Trajectory
    s_p: Trajectory
    s_u: Trajectory
    mu: float
    method: str
    delta_mu: Optional[float] = None


@dataclass
class SVDSensitivity:
    """Derivatives of the weighted SVD factors and of the POD coefficients"""

    W_tilde_mu: np.ndarray
    lambda_mu: np.ndarray
    sigma_mu: np.ndarray
    sigma_dagger_mu: np.ndarray
    V_l_mu: np.ndarray
    U_l_mu: np.ndarray
    Psi_mu: np.ndarray


def default_delta_mu(mu0):
    """Default centred-difference increment mu0 / 20"""
    return mu0 / 20.0


def solve_cse(setup, solution, operator="full", d_operator=None, **options):
    """
    Sensitivity triple from the linearized optimality system.

    The state sensitivity sees the source -(k/2) D (y_m + y_{m+1}) and the
    adjoint sensitivity -(k/2) D^T (p_m + p_{m+1}), with D the derivative of
    the SIPG matrix in epsilon; the data of the problem do not depend on it.
    """
    if operator not in ("full", "volume"):
        raise ConfigurationError(f"Sensitivity operator must be 'full' or 'volume', got {operator!r}")
    if d_operator is None:
        d_operator = setup.derivative_operator(volume_only=(operator == "volume"))

    y, _, p, _ = solution
    y_levels = y.values if isinstance(y, Trajectory) else np.asarray(y)
    p_levels = p.values if isinstance(p, Trajectory) else np.asarray(p)

    system = setup.system.homogeneous()
    k = system.k
    state_forcing = -0.5 * k * np.asarray((d_operator @ (y_levels[:-1] + y_levels[1:]).T).T)
    adjoint_forcing = -0.5 * k * np.asarray((d_operator.T @ (p_levels[:-1] + p_levels[1:]).T).T)

    problem = OptimalControlProblem(system, state_forcing, adjoint_forcing)
    s_y, s_u, s_p, stats = problem.solve(**options)
    logger.info(
        f"CSE sensitivities at eps={setup.epsilon:.4g} ({operator} operator): "
        f"{stats.iterations} Newton iterations"
    )
    return SensitivityTriple(
        Trajectory(s_y, k, TrajectoryKind.STATE_SENSITIVITY),
        Trajectory(s_p, k, TrajectoryKind.ADJOINT_SENSITIVITY),
        Trajectory(s_u, k, TrajectoryKind.CONTROL_SENSITIVITY),
        mu=setup.epsilon,
        method="CSE",
    )


def central_difference(plus, minus, delta_mu):
    """(plus - minus) / (2 delta_mu)"""
    return (plus - minus) / (2.0 * delta_mu)


def solve_fd(setup_factory, mu0, delta_mu=None, solver=None, concurrent=True, **options):
    """
    Sensitivity triple by centred differences of optimal trajectories.
    solver(mu) returns a (y, u, p, ...) sequence; the default optimizes
    setup_factory(mu).
    """
    if delta_mu is None:
        delta_mu = default_delta_mu(mu0)
    if not delta_mu > 0.0:
        raise ConfigurationError(f"Parameter increment must be positive, got {delta_mu}")
    if not mu0 - delta_mu > 0.0:
        raise ConfigurationError(f"mu0 - delta_mu must stay positive, got {mu0} - {delta_mu}")

    if solver is None:
        def solver(mu):
            return optimize(setup_factory(mu), **options)

    parameters = (mu0 + delta_mu, mu0 - delta_mu)
    if concurrent:
        with ThreadPoolExecutor(max_workers=2) as pool:
            plus, minus = pool.map(solver, parameters)
    else:
        plus, minus = (solver(mu) for mu in parameters)

    y_plus, u_plus, p_plus = tuple(plus)[:3]
    y_minus, u_minus, p_minus = tuple(minus)[:3]

    def difference(a, b, kind):
        return a.with_values(central_difference(a.values, b.values, delta_mu), kind)

    logger.info(f"FD sensitivities at mu={mu0:.4g} with delta={delta_mu:.3g}")
    return SensitivityTriple(
        difference(y_plus, y_minus, TrajectoryKind.STATE_SENSITIVITY),
        difference(p_plus, p_minus, TrajectoryKind.ADJOINT_SENSITIVITY),
        difference(u_plus, u_minus, TrajectoryKind.CONTROL_SENSITIVITY),
        mu=mu0,
        method="FD",
        delta_mu=delta_mu,
    )


def snapshot_sensitivity(triple, kind):
    """Sensitivity of a snapshot matrix, column-aligned with build_snapshots"""
    return build_snapshots(triple.s_y, triple.s_p, SnapshotKind.parse(kind), triple.mu).W


def check_spectral_gap(singular_values, rank, gap_tol=1e-6):
    """Raise ClusteredSpectrumError unless the retained values are simple"""
    s = np.asarray(singular_values, dtype=float)
    for j in range(rank):
        if s[j] <= 0.0:
            raise ClusteredSpectrumError(f"Retained singular value {j} is zero")
        others = np.delete(s, j)
        if others.size and np.min(np.abs(others - s[j])) < gap_tol * s[j]:
            raise ClusteredSpectrumError(
                f"Singular value {j} ({s[j]:.6e}) is not separated from the rest of the spectrum"
            )


def svd_sensitivities(basis, W_mu, gap_tol=1e-6):
    """
    Derivatives of the retained SVD factors and of Psi for a snapshot
    derivative W_mu, with B = W~^T W~ the snapshot correlation matrix.
    """
    if basis.W_tilde is None or basis.mass_factor is None:
        raise ValueError("Basis lacks the weighted snapshot matrix; build it with compute_pod")
    W_tilde = basis.W_tilde
    W_tilde_mu = basis.mass_factor.weight(np.asarray(W_mu, dtype=float))
    if W_tilde_mu.shape != W_tilde.shape:
        raise ValueError(f"Snapshot derivative has shape {W_tilde_mu.shape}, expected {W_tilde.shape}")

    l = basis.rank
    sigma = basis.retained_values
    check_spectral_gap(basis.singular_values, l, gap_tol)

    B = W_tilde.T @ W_tilde
    B_mu = W_tilde_mu.T @ W_tilde + W_tilde.T @ W_tilde_mu
    identity = np.eye(B.shape[0])
    V_l = basis.V_l

    lambda_mu = np.empty(l)
    V_l_mu = np.empty_like(V_l)
    for j in range(l):
        v = V_l[:, j]
        lambda_mu[j] = v @ B_mu @ v
        rhs = -(B_mu - lambda_mu[j] * identity) @ v
        s, *_ = la.lstsq(B - sigma[j] ** 2 * identity, rhs, cond=1e-13)
        # Differentiated normalization v^T v = 1
        V_l_mu[:, j] = s - (s @ v) * v

    sigma_mu = lambda_mu / (2.0 * sigma)
    sigma_dagger = 1.0 / sigma
    sigma_dagger_mu = -sigma_mu / sigma ** 2

    U_l_mu = (
        (W_tilde_mu @ V_l) * sigma_dagger
        + (W_tilde @ V_l_mu) * sigma_dagger
        + (W_tilde @ V_l) * sigma_dagger_mu
    )
    Psi_mu = basis.mass_factor.unweight(U_l_mu)

    logger.debug(f"SVD sensitivities for {l} modes: lambda_mu = {np.array2string(lambda_mu, precision=3)}")
    return SVDSensitivity(W_tilde_mu, lambda_mu, sigma_mu, sigma_dagger_mu, V_l_mu, U_l_mu, Psi_mu)


def align_columns(reference, candidate):
    """Flip candidate columns to have nonnegative dot products with reference"""
    signs = np.sign(np.sum(reference * candidate, axis=0))
    signs[signs == 0.0] = 1.0
    return candidate * signs
