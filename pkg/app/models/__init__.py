"""
Models package for sensipod.
Contains the mesh, trajectory and sweep data models.
"""
