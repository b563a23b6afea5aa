"""
sensipod application package.
Reduced-order optimal control of the diffusion-convection-reaction equation.
"""

__version__ = "0.1.0"
__author__ = "sensipod Team"
