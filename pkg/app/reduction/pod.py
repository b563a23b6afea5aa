"""
Mass-weighted proper orthogonal decomposition and Galerkin reduced models.

With M = L L^T the snapshot matrix is weighted as W~ = L^T W; the SVD
W~ = U S V^T gives POD coefficients Psi solving L^T Psi = U_l, so that
Psi^T M Psi = I.
"""

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from app.errors import DependentBasisError, RankDeficiencyError, ReducedModelError
from app.models.trajectory import Trajectory
from app.solver.ocp import OCPSetup, OptimalControlProblem
from app.solver.optimizer import OptimizeStats
from app.solver.system import SpaceTimeSystem

logger = logging.getLogger("sensipod.reduction.pod")


class SnapshotKind(Enum):
    """Snapshot sets: states, adjoints, or both"""
    Y = "Y"
    P = "P"
    YP = "YP"

    @property
    def label(self):
        """Display label"""
        return "Y∪P" if self is SnapshotKind.YP else self.value

    @classmethod
    def parse(cls, value):
        """Accept enum members, 'Y', 'P', 'YP', 'Y+P' or 'Y∪P'"""
        if isinstance(value, cls):
            return value
        text = str(value).strip().upper().replace("∪", "").replace("+", "")
        try:
            return cls(text)
        except ValueError:
            raise ValueError(f"Unknown snapshot kind {value!r}; expected Y, P or YP")


@dataclass
class SnapshotMatrix:
    """Snapshot columns of one trajectory set at one parameter"""

    W: np.ndarray
    kind: SnapshotKind
    parameter: Optional[float] = None

    @property
    def shape(self):
        return self.W.shape


def _levels(trajectory):
    return trajectory.values if isinstance(trajectory, Trajectory) else np.asarray(trajectory)


def build_snapshots(y, p, kind, parameter=None):
    """Snapshot matrix of all time levels; Y∪P puts states first"""
    kind = SnapshotKind.parse(kind)
    y_levels = _levels(y)
    p_levels = _levels(p)
    if y_levels.shape != p_levels.shape:
        raise ValueError(
            f"State and adjoint trajectories differ in shape: {y_levels.shape} vs {p_levels.shape}"
        )

    if kind is SnapshotKind.Y:
        W = y_levels.T.copy()
    elif kind is SnapshotKind.P:
        W = p_levels.T.copy()
    else:
        W = np.hstack([y_levels.T, p_levels.T])
    return SnapshotMatrix(W, kind, parameter)


class MassFactor:
    """Lower Cholesky factor L of the mass matrix, M = L L^T"""

    def __init__(self, lower, blocks=None):
        """Initialize from the factor and, for block-diagonal M, its blocks"""
        self.lower = lower
        self.blocks = blocks

    @classmethod
    def from_blocks(cls, mass_blocks):
        """Factor a block-diagonal mass matrix block by block"""
        blocks = np.linalg.cholesky(np.asarray(mass_blocks, dtype=float))
        lower = sp.block_diag(list(blocks), format="csr")
        return cls(lower, blocks)

    @classmethod
    def from_space(cls, space):
        """Factor the mass matrix of a DG space"""
        return cls.from_blocks(space.mass_blocks)

    @classmethod
    def from_matrix(cls, mass):
        """Dense Cholesky factor of a small SPD matrix"""
        dense = mass.toarray() if sp.issparse(mass) else np.asarray(mass, dtype=float)
        return cls(la.cholesky(dense, lower=True))

    @property
    def dim(self):
        return self.lower.shape[0]

    def weight(self, W):
        """L^T W"""
        return np.asarray(self.lower.T @ W)

    def unweight(self, U):
        """Solve L^T X = U"""
        U = np.asarray(U, dtype=float)
        if self.blocks is not None:
            n_blocks, size, _ = self.blocks.shape
            rhs = U.reshape(n_blocks, size, -1)
            solved = np.linalg.solve(np.swapaxes(self.blocks, 1, 2), rhs)
            return solved.reshape(U.shape)
        return la.solve_triangular(self.lower, U, lower=True, trans="T")

    def matrix(self):
        """Reconstructed L L^T"""
        product = self.lower @ self.lower.T
        return product.toarray() if sp.issparse(product) else product


def energy_ratio(singular_values, rank):
    """E(l) = sum_{i<=l} s_i^2 / sum_i s_i^2"""
    squares = np.square(np.asarray(singular_values, dtype=float))
    total = squares.sum()
    if total == 0.0:
        return 0.0
    return float(squares[:rank].sum() / total)


def select_rank(singular_values, gamma):
    """Smallest l with E(l) >= 1 - gamma"""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"Energy threshold gamma must lie in (0, 1), got {gamma}")
    squares = np.square(np.asarray(singular_values, dtype=float))
    total = squares.sum()
    if total == 0.0:
        return 0
    captured = np.cumsum(squares) / total
    return int(np.argmax(captured >= 1.0 - gamma) + 1)


def numerical_rank(singular_values, shape):
    """Count of singular values above max(shape) * eps * s_1"""
    s = np.asarray(singular_values)
    if s.size == 0 or s[0] == 0.0:
        return 0
    tol = max(shape) * np.finfo(float).eps * s[0]
    return int(np.count_nonzero(s > tol))


class PODBasis:
    """Retained POD modes with the SVD data needed for sensitivities"""

    def __init__(self, Psi, singular_values, U_l, V_l, mass_factor=None, kind=SnapshotKind.Y,
                 parameter=None, W_tilde=None, V=None):
        """Initialize from the coefficient matrix and SVD factors"""
        self.Psi = np.asarray(Psi)
        self.singular_values = np.asarray(singular_values)
        self.U_l = np.asarray(U_l)
        self.V_l = np.asarray(V_l)
        self.mass_factor = mass_factor
        self.kind = SnapshotKind.parse(kind)
        self.parameter = parameter
        self.W_tilde = W_tilde
        self.V = V

    @property
    def rank(self):
        """Number of retained modes l"""
        return self.Psi.shape[1]

    @property
    def retained_values(self):
        """Singular values of the retained modes"""
        return self.singular_values[:self.rank]

    @property
    def energy(self):
        """Energy ratio of the retained modes"""
        return energy_ratio(self.singular_values, self.rank)

    def metadata(self):
        """Sidecar record of the basis"""
        return {
            "kind": self.kind.value,
            "parameter": self.parameter,
            "rank": self.rank,
            "singular_values": [float(s) for s in self.singular_values],
        }

    def save(self, path):
        """Write coefficients to <path>.npz and metadata to <path>.json"""
        path = Path(path).with_suffix("")
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path.with_suffix(".npz"), Psi=self.Psi, singular_values=self.singular_values,
                 U_l=self.U_l, V_l=self.V_l)
        with open(path.with_suffix(".json"), "w") as f:
            json.dump(self.metadata(), f, indent=4)
        logger.info(f"Saved {self.kind.label} basis with {self.rank} modes to {path}.npz")
        return path.with_suffix(".npz")

    @classmethod
    def load(cls, path, mass_factor=None):
        """Read a basis written by save"""
        path = Path(path).with_suffix("")
        with np.load(path.with_suffix(".npz")) as data:
            arrays = {name: data[name] for name in data.files}
        with open(path.with_suffix(".json"), "r") as f:
            meta = json.load(f)
        return cls(arrays["Psi"], arrays["singular_values"], arrays["U_l"], arrays["V_l"],
                   mass_factor=mass_factor, kind=meta["kind"], parameter=meta["parameter"])


def compute_pod(snapshots, mass_factor, rank=None, gamma=None):
    """
    POD basis of a snapshot matrix in the M inner product.
    Exactly one of rank (fixed l) and gamma (energy threshold) selects l.
    """
    if (rank is None) == (gamma is None):
        raise ValueError("Specify exactly one of rank and gamma")

    if isinstance(snapshots, SnapshotMatrix):
        W, kind, parameter = snapshots.W, snapshots.kind, snapshots.parameter
    else:
        W, kind, parameter = np.asarray(snapshots), SnapshotKind.Y, None

    W_tilde = mass_factor.weight(W)
    U, s, Vt = la.svd(W_tilde, full_matrices=False)
    achievable = numerical_rank(s, W_tilde.shape)

    if rank is not None:
        if rank < 1:
            raise ValueError(f"POD rank must be positive, got {rank}")
        if rank > achievable:
            raise RankDeficiencyError(rank, achievable)
        l = int(rank)
    else:
        if achievable == 0:
            raise RankDeficiencyError(1, 0)
        l = select_rank(s[:achievable], gamma)

    U_l = U[:, :l].copy()
    V = Vt.T.copy()
    Psi = mass_factor.unweight(U_l)

    # Largest-magnitude coefficient of every mode is positive
    pivots = np.argmax(np.abs(Psi), axis=0)
    signs = np.sign(Psi[pivots, np.arange(l)])
    signs[signs == 0.0] = 1.0
    Psi *= signs
    U_l *= signs
    V[:, :l] *= signs

    logger.info(
        f"POD ({SnapshotKind.parse(kind).label}): {l} modes of numerical rank {achievable}, "
        f"energy {energy_ratio(s, l):.6f}"
    )
    return PODBasis(Psi, s, U_l, V[:, :l].copy(), mass_factor, kind, parameter,
                    W_tilde=W_tilde, V=V)


def m_orthonormalize(columns, mass, tol=1e-10):
    """Modified Gram-Schmidt in the M inner product, applied twice per column"""
    Q = np.array(columns, dtype=float)
    for j in range(Q.shape[1]):
        original = np.sqrt(Q[:, j] @ (mass @ Q[:, j]))
        for _ in range(2):
            for i in range(j):
                Q[:, j] -= (Q[:, i] @ (mass @ Q[:, j])) * Q[:, i]
        norm = np.sqrt(Q[:, j] @ (mass @ Q[:, j]))
        if norm <= tol * max(original, np.finfo(float).tiny):
            raise DependentBasisError(f"Column {j} is numerically dependent on its predecessors", column=j)
        Q[:, j] /= norm
    return Q


class ReducedModel(SpaceTimeSystem):
    """Galerkin projection of a space-time system onto basis columns"""

    def __init__(self, basis, full_system, method=None):
        """Initialize by projecting full_system onto the columns of basis"""
        parts = full_system.project(basis)
        super().__init__(
            parts["mass"], parts["operator"], full_system.k, full_system.alpha,
            parts["source_loads"], parts["target_loads"], parts["target_energy"], parts["initial"],
        )
        self.basis = np.asarray(basis)
        self.full_system = full_system
        self.method = method

    @property
    def size(self):
        """Number of basis columns"""
        return self.basis.shape[1]

    @property
    def reduced_mass(self):
        return self.mass

    @property
    def reduced_operator(self):
        return self.operator

    @property
    def reduced_operator_adjoint(self):
        return self.operator.T

    def lift(self, levels):
        """Full-space levels of reduced coefficients"""
        return np.asarray(levels) @ self.basis.T


def _columns_of(basis):
    """Coefficient columns of a PODBasis, an enriched basis or an array"""
    if isinstance(basis, PODBasis):
        return basis.Psi
    if hasattr(basis, "columns"):
        return basis.columns
    return np.asarray(basis, dtype=float)


def project_model(setup, basis, orthonormalize=False, method=None, conditioning=1e-14):
    """
    Reduced model of a setup (or system) on the given basis columns.
    The reduced mass is assembled exactly; singular reduced mass raises.
    """
    system = setup.system if isinstance(setup, OCPSetup) else setup
    columns = _columns_of(basis)
    if method is None:
        method = getattr(basis, "method", None)
    if orthonormalize:
        columns = m_orthonormalize(columns, system.mass)

    reduced_mass = columns.T @ np.asarray(system.mass @ columns)
    try:
        la.cho_factor(reduced_mass)
    except la.LinAlgError as e:
        raise ReducedModelError(f"Reduced mass matrix is not positive definite: {e}") from e
    eigenvalues = np.linalg.eigvalsh(reduced_mass)
    if eigenvalues[0] <= conditioning * eigenvalues[-1]:
        raise ReducedModelError(
            f"Reduced mass matrix is numerically singular (condition {eigenvalues[-1] / eigenvalues[0]:.3e})"
        )

    model = ReducedModel(columns, system, method=method)
    logger.debug(f"Projected model onto {model.size} columns")
    return model


@dataclass
class ReducedSolution:
    """Reduced optimality triple lifted to the full space"""

    y: Trajectory
    u: Trajectory
    p: Trajectory
    stats: OptimizeStats
    coefficients: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.y, self.u, self.p, self.stats))


def solve_reduced_ocp(model, tol=1e-8, max_iter=30, **options):
    """Newton-CG on the reduced model; returns trajectories lifted by the basis"""
    problem = OptimalControlProblem(model)
    y_r, u_r, p_r, stats = problem.solve(tol=tol, max_iter=max_iter, **options)
    k = model.k
    return ReducedSolution(
        Trajectory(model.lift(y_r), k, "state"),
        Trajectory(model.lift(u_r), k, "control"),
        Trajectory(model.lift(p_r), k, "adjoint"),
        stats,
        {"y": y_r, "u": u_r, "p": p_r},
    )
