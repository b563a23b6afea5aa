"""
Mesh models for sensipod.
Triangulations of the unit square with full edge topology and
convection-driven boundary classification.
"""

import logging
import numpy as np

from app.errors import MeshError

logger = logging.getLogger("sensipod.models.mesh")


def _frozen(array):
    """Return a read-only view of an array"""
    array = np.ascontiguousarray(array)
    array.flags.writeable = False
    return array


class Mesh:
    """
    Conforming triangulation with edge topology.

    Local edge i of a triangle is the edge opposite its vertex i, running
    from vertex (i+1)%3 to vertex (i+2)%3. Triangles are counter-clockwise,
    so the outward normal of that edge is its direction rotated clockwise.
    """

    def __init__(self, vertices, triangles):
        """Initialize from vertex coordinates and CCW vertex triples"""
        self.vertices = _frozen(np.asarray(vertices, dtype=float))
        self.triangles = _frozen(np.asarray(triangles, dtype=np.int64))

        # Element geometry
        v0, v1, v2 = (self.vertices[self.triangles[:, i]] for i in range(3))
        e1 = v1 - v0
        e2 = v2 - v0
        doubled = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        if np.any(doubled <= 0.0):
            raise MeshError("Triangles must have positive area and CCW orientation")
        self.areas = _frozen(0.5 * doubled)

        # Jacobians of the affine maps from the reference triangle
        jac = np.empty((self.n_triangles, 2, 2))
        jac[:, :, 0] = e1
        jac[:, :, 1] = e2
        self.jacobians = _frozen(jac)
        self.inverse_jacobians = _frozen(np.linalg.inv(jac))

        self._build_edges()

        # h_K is the longest edge of K
        local_lengths = self.edge_lengths[self.element_edges]
        self.h_K = _frozen(local_lengths.max(axis=1))
        self.h = float(self.h_K.max())

        logger.debug(
            f"Mesh built: {self.n_triangles} triangles, {len(self.interior_edges)} interior "
            f"and {len(self.boundary_edges)} boundary edges, h={self.h:.4g}"
        )

    def _build_edges(self):
        """Build edge topology from the triangle list"""
        tri = self.triangles
        nt = self.n_triangles

        # Local edge i runs from vertex (i+1)%3 to (i+2)%3
        starts = np.stack([tri[:, 1], tri[:, 2], tri[:, 0]], axis=1).ravel()
        ends = np.stack([tri[:, 2], tri[:, 0], tri[:, 1]], axis=1).ravel()
        keys = np.stack([np.minimum(starts, ends), np.maximum(starts, ends)], axis=1)
        unique_keys, edge_of_side, counts = np.unique(
            keys, axis=0, return_inverse=True, return_counts=True
        )
        edge_of_side = edge_of_side.ravel()
        if np.any(counts > 2):
            raise MeshError("Non-manifold triangulation: an edge has more than two triangles")

        n_edges = len(unique_keys)
        element_of_side = np.repeat(np.arange(nt), 3)
        local_of_side = np.tile(np.arange(3), nt)

        # First side seen owns the edge; the second (if any) is the neighbour
        edge_elements = -np.ones((n_edges, 2), dtype=np.int64)
        edge_local = -np.ones((n_edges, 2), dtype=np.int64)
        order = np.argsort(edge_of_side, kind="stable")
        sorted_edges = edge_of_side[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = sorted_edges[1:] != sorted_edges[:-1]
        owner_sides = order[first]
        neighbour_sides = order[~first]
        edge_elements[sorted_edges[first], 0] = element_of_side[owner_sides]
        edge_local[sorted_edges[first], 0] = local_of_side[owner_sides]
        edge_elements[sorted_edges[~first], 1] = element_of_side[neighbour_sides]
        edge_local[sorted_edges[~first], 1] = local_of_side[neighbour_sides]

        # Geometry oriented along the owner's CCW traversal
        owner_start = starts[owner_sides]
        owner_end = ends[owner_sides]
        edge_vertices = np.empty((n_edges, 2), dtype=np.int64)
        edge_vertices[sorted_edges[first], 0] = owner_start
        edge_vertices[sorted_edges[first], 1] = owner_end
        tangent = self.vertices[edge_vertices[:, 1]] - self.vertices[edge_vertices[:, 0]]
        lengths = np.hypot(tangent[:, 0], tangent[:, 1])
        normals = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1) / lengths[:, None]

        self.edge_vertices = _frozen(edge_vertices)
        self.edge_elements = _frozen(edge_elements)
        self.edge_local = _frozen(edge_local)
        self.edge_lengths = _frozen(lengths)
        self.edge_normals = _frozen(normals)
        self.edge_midpoints = _frozen(
            0.5 * (self.vertices[edge_vertices[:, 0]] + self.vertices[edge_vertices[:, 1]])
        )
        self.element_edges = _frozen(edge_of_side.reshape(nt, 3))

        boundary = edge_elements[:, 1] < 0
        self.boundary_edges = _frozen(np.flatnonzero(boundary))
        self.interior_edges = _frozen(np.flatnonzero(~boundary))

    @property
    def n_triangles(self):
        """Number of triangles"""
        return len(self.triangles)

    @property
    def n_vertices(self):
        """Number of vertices"""
        return len(self.vertices)

    @property
    def n_edges(self):
        """Number of edges"""
        return len(self.edge_lengths)

    @property
    def h_E(self):
        """Per-edge lengths"""
        return self.edge_lengths

    def interior_edge_pairs(self):
        """Return (K, K^e) element pairs for every interior edge"""
        return self.edge_elements[self.interior_edges]

    def boundary_edge_elements(self):
        """Return the owning element of every boundary edge"""
        return self.edge_elements[self.boundary_edges, 0]

    def element_normals(self, element, local_edge):
        """Outward unit normal of a triangle's local edge"""
        tri = self.triangles[element]
        a = self.vertices[tri[(local_edge + 1) % 3]]
        b = self.vertices[tri[(local_edge + 2) % 3]]
        t = b - a
        return np.array([t[1], -t[0]]) / np.hypot(t[0], t[1])

    def to_dict(self):
        """Summary of the mesh as a dictionary"""
        return {
            "vertices": self.n_vertices,
            "triangles": self.n_triangles,
            "interior_edges": int(len(self.interior_edges)),
            "boundary_edges": int(len(self.boundary_edges)),
            "h": self.h,
        }


class EdgeClassification:
    """Inflow/outflow labels of a mesh against a velocity field"""

    def __init__(self, mesh, flux):
        """Initialize from the midpoint normal flux beta.n of every edge"""
        self.mesh = mesh

        # Flux is measured against the owner's outward normal
        self.midpoint_flux = _frozen(np.asarray(flux, dtype=float))

        boundary_flux = self.midpoint_flux[mesh.boundary_edges]
        self.boundary_inflow = _frozen(boundary_flux < 0.0)
        self.inflow_edges = _frozen(mesh.boundary_edges[boundary_flux < 0.0])
        self.outflow_edges = _frozen(mesh.boundary_edges[boundary_flux >= 0.0])

        # Per-element inflow sides dK^-: beta.n_K < 0 on that side
        side_flux = self.midpoint_flux[mesh.element_edges].copy()
        owner = mesh.edge_elements[mesh.element_edges, 0]
        is_neighbour_side = owner != np.arange(mesh.n_triangles)[:, None]
        side_flux[is_neighbour_side] *= -1.0
        self.element_inflow = _frozen(side_flux < 0.0)

    def label(self, edge):
        """Label of a boundary edge: 'inflow' or 'outflow'"""
        if self.mesh.edge_elements[edge, 1] >= 0:
            raise ValueError(f"Edge {edge} is an interior edge")
        return "inflow" if self.midpoint_flux[edge] < 0.0 else "outflow"

    def owner_inflow(self, edges):
        """True where an edge belongs to dK^- of its owner element"""
        edges = np.asarray(edges)
        owner = self.mesh.edge_elements[edges, 0]
        return self.element_inflow[owner, self.mesh.edge_local[edges, 0]]

    def split_flux(self, edges, point_flux):
        """
        Split beta.n at edge quadrature points into the flux entering the owner
        (<= 0) and the flux entering the neighbour (>= 0).
        Edges whose point fluxes all share the sign of their label hand the whole
        flux to the dK^- side; mixed-sign edges are split point by point.
        """
        point_flux = np.asarray(point_flux, dtype=float)
        owner_in = self.owner_inflow(edges)
        uniform = np.where(
            owner_in, np.all(point_flux <= 0.0, axis=1), np.all(point_flux >= 0.0, axis=1)
        )
        into_owner = np.where(owner_in[:, None], point_flux, 0.0)
        into_neighbour = np.where(owner_in[:, None], 0.0, point_flux)

        mixed = ~uniform
        if np.any(mixed):
            into_owner[mixed] = np.minimum(point_flux[mixed], 0.0)
            into_neighbour[mixed] = np.maximum(point_flux[mixed], 0.0)
            logger.debug(f"{int(mixed.sum())} of {len(mixed)} edges carry mixed-sign flux")
        return into_owner, into_neighbour


def build_uniform_mesh(n):
    """
    Uniform triangulation of the unit square.
    Each of the n x n squares is split along the diagonal from its lower-left
    to its upper-right corner, giving 2n^2 triangles.
    """
    if int(n) != n or n < 1:
        raise MeshError(f"Subdivisions per side must be a positive integer, got {n}")
    n = int(n)

    coords = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(coords, coords, indexing="xy")
    vertices = np.stack([xx.ravel(), yy.ravel()], axis=1)

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1

    lower = np.stack([v00, v10, v11], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    logger.info(f"Built uniform {n}x{n} mesh with {len(triangles)} triangles")
    return Mesh(vertices, triangles)


def classify_edges(mesh, beta):
    """
    Classify edges against a velocity field.
    The sign of beta.n at the edge midpoint decides; beta.n == 0 is outflow.
    """
    mid = mesh.edge_midpoints
    bx, by = beta(mid[:, 0], mid[:, 1])
    bx = np.broadcast_to(np.asarray(bx, dtype=float), (mesh.n_edges,))
    by = np.broadcast_to(np.asarray(by, dtype=float), (mesh.n_edges,))
    flux = bx * mesh.edge_normals[:, 0] + by * mesh.edge_normals[:, 1]
    return EdgeClassification(mesh, flux)
