"""
Reduction package for sensipod.
POD bases, their parameter sensitivities and enriched bases.
"""
