"""
Discontinuous piecewise-polynomial spaces on triangle meshes.
Nodal Lagrange shape functions, traces on edges, projections and
the velocity fields used by the convection term.
"""

import logging
import numpy as np

from app.discretization.quadrature import rules_for_degree

logger = logging.getLogger("sensipod.discretization.fields")

# Gradients of the barycentric coordinates in reference coordinates
_BARY_GRADIENTS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])

# P2 edge-midpoint functions 4*l_a*l_b, ordered by the opposite vertex
_P2_EDGE_PAIRS = ((1, 2), (2, 0), (0, 1))


class ReferenceElement:
    """Nodal Lagrange basis of degree 0, 1 or 2 on the reference triangle"""

    def __init__(self, degree=1):
        """Initialize the basis of the given degree"""
        if degree not in (0, 1, 2):
            raise ValueError(f"Polynomial degree must be 0, 1 or 2, got {degree}")
        self.degree = degree
        self.n_local = (degree + 1) * (degree + 2) // 2

    def evaluate(self, bary):
        """Shape function values at barycentric points (..., 3) -> (..., n_local)"""
        bary = np.asarray(bary, dtype=float)
        if self.degree == 0:
            return np.ones(bary.shape[:-1] + (1,))
        if self.degree == 1:
            return bary.copy()

        vertex = bary * (2.0 * bary - 1.0)
        edge = np.stack([4.0 * bary[..., a] * bary[..., b] for a, b in _P2_EDGE_PAIRS], axis=-1)
        return np.concatenate([vertex, edge], axis=-1)

    def gradients(self, bary):
        """Reference gradients at barycentric points (..., 3) -> (..., n_local, 2)"""
        bary = np.asarray(bary, dtype=float)
        shape = bary.shape[:-1]
        if self.degree == 0:
            return np.zeros(shape + (1, 2))
        if self.degree == 1:
            return np.broadcast_to(_BARY_GRADIENTS, shape + (3, 2)).copy()

        grads = np.empty(shape + (6, 2))
        for i in range(3):
            grads[..., i, :] = (4.0 * bary[..., i, None] - 1.0) * _BARY_GRADIENTS[i]
        for j, (a, b) in enumerate(_P2_EDGE_PAIRS):
            grads[..., 3 + j, :] = 4.0 * (
                bary[..., a, None] * _BARY_GRADIENTS[b] + bary[..., b, None] * _BARY_GRADIENTS[a]
            )
        return grads


class DGSpace:
    """
    Discontinuous Galerkin space of degree p on a mesh.
    Global DoF e*n_local + i belongs to local function i of element e.
    """

    def __init__(self, mesh, degree=1):
        """Initialize the space and precompute volume quadrature data"""
        self.mesh = mesh
        self.degree = degree
        self.element = ReferenceElement(degree)
        self.n_local = self.element.n_local
        self.n_dofs = mesh.n_triangles * self.n_local
        self.dof_map = np.arange(self.n_dofs).reshape(mesh.n_triangles, self.n_local)

        (self.volume_points, self.volume_weights), (self.edge_nodes, self.edge_weights) = (
            rules_for_degree(degree)
        )

        # Volume data per element and quadrature point
        origin = mesh.vertices[mesh.triangles[:, 0]]
        ref = self.volume_points[:, 1:]
        self.quad_points = origin[:, None, :] + np.einsum("eij,qj->eqi", mesh.jacobians, ref)
        self.quad_weights = mesh.areas[:, None] * self.volume_weights[None, :]
        self.basis_values = self.element.evaluate(self.volume_points)
        ref_grads = self.element.gradients(self.volume_points)
        self.basis_gradients = np.einsum("qnj,ejk->eqnk", ref_grads, mesh.inverse_jacobians)

        # Every element block is the reference block scaled by the area
        ref_mass = np.einsum("q,qi,qj->ij", self.volume_weights, self.basis_values, self.basis_values)
        self.mass_blocks = mesh.areas[:, None, None] * ref_mass[None, :, :]

        logger.debug(f"DG space of degree {degree}: {self.n_dofs} DoF on {mesh.n_triangles} elements")

    def trace(self, elements, points):
        """
        Values and physical gradients of an element's shape functions at
        physical points (ne, q, 2). Returns arrays (ne, q, n) and (ne, q, n, 2).
        """
        mesh = self.mesh
        origin = mesh.vertices[mesh.triangles[elements, 0]]
        inv = mesh.inverse_jacobians[elements]
        xi = np.einsum("eij,eqj->eqi", inv, points - origin[:, None, :])
        bary = np.concatenate([1.0 - xi.sum(axis=-1, keepdims=True), xi], axis=-1)
        values = self.element.evaluate(bary)
        grads = np.einsum("eqnj,ejk->eqnk", self.element.gradients(bary), inv)
        return values, grads

    def edge_points(self, edges):
        """Physical edge quadrature points (ne, q, 2) oriented along the owner"""
        ends = self.mesh.vertices[self.mesh.edge_vertices[edges]]
        s = self.edge_nodes[None, :, None]
        return ends[:, None, 0, :] * (1.0 - s) + ends[:, None, 1, :] * s

    def evaluate(self, coeffs, points_per_element=None):
        """Evaluate a DoF vector at the volume quadrature points -> (n_triangles, q)"""
        local = np.asarray(coeffs)[self.dof_map]
        if points_per_element is None:
            return local @ self.basis_values.T
        values, _ = self.trace(np.arange(self.mesh.n_triangles), points_per_element)
        return np.einsum("eqn,en->eq", values, local)

    def interpolate_constant(self, value=1.0):
        """DoF vector of a constant function"""
        # Lagrange bases are a partition of unity
        return np.full(self.n_dofs, float(value))


def evaluate_function(g, x, y, t=0.0):
    """Evaluate a scalar function of (x, y, t) or a constant on point arrays"""
    if callable(g):
        return np.broadcast_to(np.asarray(g(x, y, t), dtype=float), np.shape(x))
    return np.full(np.shape(x), float(g))


def assemble_load(space, g, t=0.0):
    """Load vector with entries integral of g * phi_i"""
    pts = space.quad_points
    values = evaluate_function(g, pts[..., 0], pts[..., 1], t)
    local = np.einsum("eq,eq,qn->en", space.quad_weights, values, space.basis_values)
    return local.ravel()


def l2_project(space, g, t=0.0):
    """Coefficients of the elementwise L2 projection of g at time t"""
    load = assemble_load(space, g, t).reshape(space.mesh.n_triangles, space.n_local)
    coeffs = np.linalg.solve(space.mass_blocks, load[..., None])[..., 0]
    return coeffs.ravel()


def l2_error(space, coeffs, g, t=0.0):
    """L2 norm of coeffs - g computed by volume quadrature"""
    pts = space.quad_points
    exact = evaluate_function(g, pts[..., 0], pts[..., 1], t)
    diff = space.evaluate(coeffs) - exact
    return float(np.sqrt(np.sum(space.quad_weights * diff * diff)))


# Velocity fields

def rotating_velocity(x, y):
    """Divergence-free rotation about the centre of the unit square"""
    return y - 0.5, -x + 0.5


def constant_velocity(bx, by):
    """Spatially constant velocity field"""
    def field(x, y):
        return np.full(np.shape(x), float(bx)), np.full(np.shape(y), float(by))
    return field


def zero_velocity(x, y):
    """Vanishing velocity field"""
    return np.zeros(np.shape(x)), np.zeros(np.shape(y))


def velocity_from_name(name):
    """
    Velocity field from a configuration value.
    Accepts "rotating", "zero" or "constant:bx,by".
    """
    if callable(name):
        return name
    text = str(name).strip().lower()
    if text == "rotating":
        return rotating_velocity
    if text in ("zero", "none"):
        return zero_velocity
    if text.startswith("constant:"):
        try:
            bx, by = (float(v) for v in text.split(":", 1)[1].split(","))
        except ValueError:
            raise ValueError(f"Malformed constant velocity {name!r}, expected constant:bx,by")
        return constant_velocity(bx, by)
    raise ValueError(f"Unknown velocity field {name!r}")
