"""
Parameter-robust bases built from a POD basis and its sensitivity.

  BPOD    the baseline POD basis itself
  ExtPOD  first-order Taylor extrapolation Psi + dmu Psi_mu
  ExpPOD  expansion [Psi | Psi_mu]
  SAIM    interpolation of the principal angles between two anchor bases
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from app.errors import DependentBasisError
from app.reduction.pod import PODBasis

logger = logging.getLogger("sensipod.reduction.enrichment")


class EnrichmentMethod(Enum):
    """Reduced basis construction"""
    BPOD = "BPOD"
    EXTPOD = "ExtPOD"
    EXPPOD = "ExpPOD"
    SAIM = "SAIM"

    @classmethod
    def parse(cls, value):
        """Case-insensitive lookup by value"""
        if isinstance(value, cls):
            return value
        for method in cls:
            if method.value.lower() == str(value).strip().lower():
                return method
        raise ValueError(f"Unknown method {value!r}; expected one of {[m.value for m in cls]}")


@dataclass
class EnrichedBasis:
    """Basis columns with their construction record"""

    columns: np.ndarray
    method: EnrichmentMethod
    source_parameters: Tuple[float, ...] = ()
    target_parameter: Optional[float] = None

    @property
    def size(self):
        return self.columns.shape[1]


def _apply(mass, vectors):
    if mass is None:
        return vectors
    return np.asarray(mass @ vectors)


def _coefficients(basis):
    return basis.Psi if isinstance(basis, PODBasis) else np.asarray(basis, dtype=float)


def _sensitivity(psi_mu):
    return psi_mu.Psi_mu if hasattr(psi_mu, "Psi_mu") else np.asarray(psi_mu, dtype=float)


def check_independence(columns, mass=None, tol=1e-10):
    """
    Raise DependentBasisError unless the Gram matrix of the M-normalized
    columns has smallest singular value >= tol.
    """
    gram = columns.T @ _apply(mass, columns)
    norms = np.sqrt(np.clip(np.diag(gram), 0.0, None))
    if np.any(norms == 0.0):
        column = int(np.flatnonzero(norms == 0.0)[0])
        raise DependentBasisError(f"Column {column} vanishes", column=column)
    scaled = gram / np.outer(norms, norms)
    smallest = la.svdvals(scaled)[-1]
    if smallest < tol:
        raise DependentBasisError(
            f"Basis columns are numerically dependent (smallest Gram singular value {smallest:.3e})"
        )
    return smallest


def baseline(basis, parameter=None):
    """The POD basis wrapped as an enriched basis"""
    params = () if parameter is None else (parameter,)
    return EnrichedBasis(_coefficients(basis).copy(), EnrichmentMethod.BPOD, params, parameter)


def extrapolate(basis, psi_mu, delta_mu, mass=None, source_parameter=None):
    """Columns Psi + delta_mu * Psi_mu"""
    Psi = _coefficients(basis)
    Psi_mu = _sensitivity(psi_mu)
    if Psi.shape != Psi_mu.shape:
        raise ValueError(f"Basis and sensitivity shapes differ: {Psi.shape} vs {Psi_mu.shape}")
    if source_parameter is None and isinstance(basis, PODBasis):
        source_parameter = basis.parameter

    columns = Psi + delta_mu * Psi_mu
    check_independence(columns, mass)
    target = None if source_parameter is None else source_parameter + delta_mu
    params = () if source_parameter is None else (source_parameter,)
    return EnrichedBasis(columns, EnrichmentMethod.EXTPOD, params, target)


def expand(basis, psi_mu, mass=None, tol=1e-8, source_parameter=None):
    """
    Columns [Psi | Psi_mu].
    A sensitivity column whose M-residual against the preceding columns is
    below tol relative to its norm is rejected.
    """
    Psi = _coefficients(basis)
    Psi_mu = _sensitivity(psi_mu)
    if Psi.shape != Psi_mu.shape:
        raise ValueError(f"Basis and sensitivity shapes differ: {Psi.shape} vs {Psi_mu.shape}")
    if source_parameter is None and isinstance(basis, PODBasis):
        source_parameter = basis.parameter

    columns = np.hstack([Psi, Psi_mu])
    l = Psi.shape[1]

    # Gram-Schmidt residual test column by column
    orthonormal = []
    for j in range(columns.shape[1]):
        vector = columns[:, j].copy()
        norm = np.sqrt(vector @ _apply(mass, vector))
        for _ in range(2):
            for q in orthonormal:
                vector -= (q @ _apply(mass, vector)) * q
        residual = np.sqrt(max(vector @ _apply(mass, vector), 0.0))
        if norm == 0.0 or residual < tol * norm:
            kind = "sensitivity" if j >= l else "basis"
            raise DependentBasisError(
                f"Expanded basis {kind} column {j} lies in the span of the preceding columns "
                f"(relative residual {residual / norm if norm else 0.0:.3e})",
                column=j,
            )
        orthonormal.append(vector / residual)

    params = () if source_parameter is None else (source_parameter,)
    return EnrichedBasis(columns, EnrichmentMethod.EXPPOD, params, None)


def principal_angles(A, B, mass=None):
    """
    Principal angles in ascending order between span(A) and span(B) in the
    M inner product (Euclidean without mass).
    """
    A = _coefficients(A)
    B = _coefficients(B)
    if mass is not None:
        factor = mass if hasattr(mass, "weight") else None
        if factor is None:
            dense = mass.toarray() if sp.issparse(mass) else np.asarray(mass)
            lower = la.cholesky(dense, lower=True)
            A, B = lower.T @ A, lower.T @ B
        else:
            A, B = factor.weight(A), factor.weight(B)
    return np.sort(la.subspace_angles(A, B))


def saim(Psi1, Psi2, mu1, mu2, muN, mass=None, euclidean=False):
    """
    Basis at muN from the principal angles between two anchor bases.

    With Psi1^T M Psi2 = U~ S V~^T, theta = arccos(S), U = Psi1 U~ and
    V = Psi2 V~, column j is u_j cos(t theta_j) + w_j sin(t theta_j), where
    t = (muN - mu1) / (mu2 - mu1) and w_j is the M-normalized part of v_j
    orthogonal to u_j (zero when v_j = u_j).
    """
    P1 = _coefficients(Psi1)
    P2 = _coefficients(Psi2)
    if P1.shape != P2.shape:
        raise ValueError(f"Anchor bases differ in shape: {P1.shape} vs {P2.shape}")
    if mu1 == mu2:
        raise ValueError("Anchor parameters must differ")
    if not min(mu1, mu2) <= muN <= max(mu1, mu2):
        raise ValueError(f"Target parameter {muN} lies outside the anchors [{mu1}, {mu2}]")
    weight = None if euclidean else mass

    product = P1.T @ _apply(weight, P2)
    U_tilde, cosines, Vt_tilde = la.svd(product)
    cosines = np.clip(cosines, -1.0, 1.0)
    theta = np.arccos(cosines)
    fraction = (muN - mu1) / (mu2 - mu1)
    theta_N = fraction * theta

    U = P1 @ U_tilde
    V = P2 @ Vt_tilde.T

    W = V - U * np.sum(U * _apply(weight, V), axis=0)
    norms = np.sqrt(np.clip(np.sum(W * _apply(weight, W), axis=0), 0.0, None))
    scale = np.sqrt(np.clip(np.sum(V * _apply(weight, V), axis=0), 0.0, None))
    degenerate = norms <= 1e-12 * np.maximum(scale, np.finfo(float).tiny)
    safe = np.where(degenerate, 1.0, norms)
    W = np.where(degenerate, 0.0, W / safe)

    columns = U * np.cos(theta_N) + W * np.sin(theta_N)
    logger.debug(
        f"SAIM at mu={muN:.4g}: t={fraction:.3f}, largest angle {np.degrees(theta.max()):.3f} deg"
    )
    return EnrichedBasis(columns, EnrichmentMethod.SAIM, (mu1, mu2), muN)
