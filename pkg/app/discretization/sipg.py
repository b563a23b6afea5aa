"""
SIPG operator assembly.
Block-diagonal mass matrix, the interior penalty bilinear form with upwind
convection, its derivative in the diffusion coefficient and the standalone
penalty matrix. Entry (i, j) of every operator is a_h(phi_j, phi_i).
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from app.discretization.fields import zero_velocity
from app.errors import ConfigurationError
from app.models.mesh import classify_edges

logger = logging.getLogger("sensipod.discretization.sipg")


def default_sigma(degree):
    """Interior penalty parameter 3p(p+1), or 1 for piecewise constants"""
    return 3.0 * degree * (degree + 1) if degree > 0 else 1.0


@dataclass(frozen=True)
class DGConfig:
    """Coefficients of the diffusion-convection-reaction operator"""

    epsilon: float
    beta: Callable = zero_velocity
    reaction: float = 0.0
    sigma: Optional[float] = None

    def penalty(self, degree):
        """Penalty parameter in effect for a space of the given degree"""
        return default_sigma(degree) if self.sigma is None else float(self.sigma)

    def with_epsilon(self, epsilon):
        """Copy of this configuration with another diffusion coefficient"""
        return replace(self, epsilon=float(epsilon))

    def validate(self, degree=1):
        """Raise ConfigurationError for inadmissible coefficients"""
        if not self.epsilon > 0.0:
            raise ConfigurationError(f"Diffusion coefficient must be positive, got {self.epsilon}")
        if self.reaction < 0.0:
            raise ConfigurationError(f"Reaction coefficient must be nonnegative, got {self.reaction}")
        if not self.penalty(degree) > 0.0:
            raise ConfigurationError(f"Penalty parameter must be positive, got {self.penalty(degree)}")


def _scatter(blocks, dofs, n):
    """Sum dense element or edge blocks into a CSR matrix"""
    size = dofs.shape[1]
    rows = np.broadcast_to(dofs[:, :, None], (len(dofs), size, size))
    cols = np.broadcast_to(dofs[:, None, :], (len(dofs), size, size))
    return sp.coo_matrix(
        (blocks.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)
    ).tocsr()


def _normal_flux(beta, points, normals):
    """beta . n at edge quadrature points -> (ne, q)"""
    bx, by = beta(points[..., 0], points[..., 1])
    bx = np.broadcast_to(np.asarray(bx, dtype=float), points.shape[:-1])
    by = np.broadcast_to(np.asarray(by, dtype=float), points.shape[:-1])
    return bx * normals[:, None, 0] + by * normals[:, None, 1]


def _assemble_form(space, diffusion=0.0, sigma=0.0, beta=None, reaction=0.0,
                   volume_diffusion=True, consistency=True, penalty=True, classification=None):
    """
    Assemble selected terms of the SIPG form.
    Upwind sides come from the edge classification; edges with mixed-sign
    flux are upwinded at every quadrature point.
    """
    mesh = space.mesh
    if beta is not None and classification is None:
        classification = classify_edges(mesh, beta)
    n_local = space.n_local
    n = space.n_dofs

    # Volume terms
    w = space.quad_weights
    phi = space.basis_values
    grads = space.basis_gradients
    local = np.zeros((mesh.n_triangles, n_local, n_local))
    if volume_diffusion and diffusion != 0.0:
        local += diffusion * np.einsum("eq,eqik,eqjk->eij", w, grads, grads)
    if beta is not None:
        pts = space.quad_points
        bx, by = beta(pts[..., 0], pts[..., 1])
        bx = np.broadcast_to(np.asarray(bx, dtype=float), w.shape)
        by = np.broadcast_to(np.asarray(by, dtype=float), w.shape)
        transport = grads[..., 0] * bx[..., None] + grads[..., 1] * by[..., None]
        local += np.einsum("eq,eqj,qi->eij", w, transport, phi)
    if reaction != 0.0:
        local += reaction * np.einsum("eq,qi,qj->eij", w, phi, phi)
    matrix = _scatter(local, space.dof_map, n)

    # Interior edges: J = [phi_1, -phi_2], G = [grad phi_1 . n1 / 2, grad phi_2 . n1 / 2]
    edges = mesh.interior_edges
    if len(edges):
        k1, k2 = mesh.edge_elements[edges].T
        pts = space.edge_points(edges)
        normals = mesh.edge_normals[edges]
        h = mesh.edge_lengths[edges]
        we = h[:, None] * space.edge_weights[None, :]
        v1, g1 = space.trace(k1, pts)
        v2, g2 = space.trace(k2, pts)
        jump = np.concatenate([v1, -v2], axis=-1)
        block = np.zeros((len(edges), 2 * n_local, 2 * n_local))
        if consistency and diffusion != 0.0:
            avg = 0.5 * np.concatenate(
                [np.einsum("eqnk,ek->eqn", g1, normals), np.einsum("eqnk,ek->eqn", g2, normals)],
                axis=-1,
            )
            cross = np.einsum("eq,eqi,eqj->eij", we, jump, avg)
            block -= diffusion * (cross + np.swapaxes(cross, 1, 2))
        if penalty and diffusion != 0.0:
            block += (sigma * diffusion / h)[:, None, None] * np.einsum("eq,eqi,eqj->eij", we, jump, jump)
        if beta is not None:
            into_owner, into_neighbour = classification.split_flux(edges, _normal_flux(beta, pts, normals))
            # Inflow side test function weighted by the flux entering it
            upwind = np.concatenate(
                [into_owner[..., None] * v1, into_neighbour[..., None] * v2],
                axis=-1,
            )
            block -= np.einsum("eq,eqi,eqj->eij", we, upwind, jump)
        dofs = np.concatenate([space.dof_map[k1], space.dof_map[k2]], axis=1)
        matrix = matrix + _scatter(block, dofs, n)

    # Boundary edges: J = [phi], G = [grad phi . n]
    edges = mesh.boundary_edges
    if len(edges):
        owner = mesh.edge_elements[edges, 0]
        pts = space.edge_points(edges)
        normals = mesh.edge_normals[edges]
        h = mesh.edge_lengths[edges]
        we = h[:, None] * space.edge_weights[None, :]
        v, g = space.trace(owner, pts)
        block = np.zeros((len(edges), n_local, n_local))
        if consistency and diffusion != 0.0:
            dn = np.einsum("eqnk,ek->eqn", g, normals)
            cross = np.einsum("eq,eqi,eqj->eij", we, v, dn)
            block -= diffusion * (cross + np.swapaxes(cross, 1, 2))
        if penalty and diffusion != 0.0:
            block += (sigma * diffusion / h)[:, None, None] * np.einsum("eq,eqi,eqj->eij", we, v, v)
        if beta is not None:
            into_owner, _ = classification.split_flux(edges, _normal_flux(beta, pts, normals))
            inflow = -into_owner
            block += np.einsum("eq,eqi,eqj->eij", we * inflow, v, v)
        matrix = matrix + _scatter(block, space.dof_map[owner], n)

    matrix.sum_duplicates()
    return matrix


def assemble_mass(space):
    """Block-diagonal mass matrix with entries integral of phi_j * phi_i"""
    mass = _scatter(space.mass_blocks, space.dof_map, space.n_dofs)
    logger.debug(f"Mass matrix assembled: {mass.shape[0]} DoF, {mass.nnz} nonzeros")
    return mass


def assemble_sipg(space, cfg, classification=None):
    """
    Matrix of the SIPG form a_h with upwind convection and reaction.
    classification must come from cfg.beta; it is computed when omitted.
    """
    cfg.validate(space.degree)
    matrix = _assemble_form(
        space,
        diffusion=float(cfg.epsilon),
        sigma=cfg.penalty(space.degree),
        beta=cfg.beta,
        reaction=float(cfg.reaction),
        classification=classification,
    )
    logger.debug(
        f"SIPG operator assembled: eps={cfg.epsilon:.4g}, sigma={cfg.penalty(space.degree):g}, "
        f"{matrix.nnz} nonzeros"
    )
    return matrix


def assemble_sipg_epsilon_derivative(space, cfg, volume_only=False):
    """
    Derivative of the SIPG matrix in epsilon.
    With volume_only only the volume diffusion term is kept.
    """
    cfg.validate(space.degree)
    return _assemble_form(
        space,
        diffusion=1.0,
        sigma=cfg.penalty(space.degree),
        consistency=not volume_only,
        penalty=not volume_only,
    )


def assemble_penalty(space, cfg):
    """Standalone penalty matrix with coefficient sigma * epsilon / h_E"""
    cfg.validate(space.degree)
    return _assemble_form(
        space,
        diffusion=float(cfg.epsilon),
        sigma=cfg.penalty(space.degree),
        volume_diffusion=False,
        consistency=False,
    )
