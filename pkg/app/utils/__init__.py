"""
Utilities package for the sensipod application.
Contains logging, helper functions and file export.
"""
