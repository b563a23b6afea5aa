"""
Discretization package for sensipod.
Discontinuous Galerkin spaces, quadrature and SIPG operator assembly.
"""
