"""
Export helpers for sensipod.
Legacy VTK for meshes and DG fields, CSV for trajectories and Matrix
Market for assembled matrices.
"""

import logging
from pathlib import Path

import numpy as np
import pandas as pd
import scipy.io
import scipy.sparse as sp

from app.utils.helpers import create_directory_if_not_exists

logger = logging.getLogger("sensipod.utils.export")

VTK_TRIANGLE = 5


def _vtk_header(f, title):
    f.write("# vtk DataFile Version 3.0\n")
    f.write(f"{title}\n")
    f.write("ASCII\n")
    f.write("DATASET UNSTRUCTURED_GRID\n")


def _vtk_cells(f, points, cells):
    f.write(f"POINTS {len(points)} double\n")
    for x, y in points:
        f.write(f"{x:.16e} {y:.16e} 0.0\n")
    f.write(f"CELLS {len(cells)} {4 * len(cells)}\n")
    for a, b, c in cells:
        f.write(f"3 {a} {b} {c}\n")
    f.write(f"CELL_TYPES {len(cells)}\n")
    f.write(f"{VTK_TRIANGLE}\n" * len(cells))


def export_mesh_vtk(mesh, path):
    """Write the mesh as a legacy ASCII unstructured grid"""
    path = Path(path)
    create_directory_if_not_exists(path.parent)
    with open(path, "w") as f:
        _vtk_header(f, "sensipod mesh")
        _vtk_cells(f, mesh.vertices, mesh.triangles)
    logger.debug(f"Mesh written to {path}")
    return path


def vertex_values(space, coeffs):
    """Values of a DG field at the three vertices of every element -> (nt, 3)"""
    local = np.asarray(coeffs)[space.dof_map]
    return local @ space.element.evaluate(np.eye(3)).T


def _trajectory_levels(trajectory):
    return trajectory.values if hasattr(trajectory, "values") else np.asarray(trajectory)


def export_trajectory_vtk(space, trajectory, directory, name="field"):
    """
    Write one VTK file per time level. Vertices are duplicated per element
    so the discontinuous field is kept exactly at the vertices.
    """
    directory = create_directory_if_not_exists(directory)
    mesh = space.mesh
    points = mesh.vertices[mesh.triangles].reshape(-1, 2)
    cells = np.arange(len(points)).reshape(-1, 3)
    levels = _trajectory_levels(trajectory)
    times = getattr(trajectory, "times", np.arange(len(levels), dtype=float))

    paths = []
    for m, (t, level) in enumerate(zip(times, levels)):
        path = directory / f"{name}_{m:04d}.vtk"
        with open(path, "w") as f:
            _vtk_header(f, f"sensipod {name} t={t:.6g}")
            _vtk_cells(f, points, cells)
            f.write(f"POINT_DATA {len(points)}\n")
            f.write(f"SCALARS {name} double 1\n")
            f.write("LOOKUP_TABLE default\n")
            np.savetxt(f, vertex_values(space, level).reshape(-1), fmt="%.16e")
        paths.append(path)
    logger.info(f"Wrote {len(paths)} VTK files for {name} to {directory}")
    return paths


def export_trajectory_csv(trajectory, path, times=None):
    """One row per time level: t, then the DoF values"""
    levels = _trajectory_levels(trajectory)
    if times is None:
        times = getattr(trajectory, "times", np.arange(len(levels), dtype=float))
    frame = pd.DataFrame(levels, columns=[f"dof_{i}" for i in range(levels.shape[1])])
    frame.insert(0, "t", times)
    path = Path(path)
    create_directory_if_not_exists(path.parent)
    frame.to_csv(path, index=False, float_format="%.16e")
    return path


def read_trajectory_csv(path):
    """Times and level values of a trajectory CSV"""
    frame = pd.read_csv(path)
    return frame["t"].to_numpy(), frame.drop(columns="t").to_numpy()


def export_matrix(matrix, path, comment=""):
    """Write a matrix in Matrix Market coordinate format"""
    path = Path(path)
    create_directory_if_not_exists(path.parent)
    scipy.io.mmwrite(str(path), sp.coo_matrix(matrix), comment=comment)
    return path
