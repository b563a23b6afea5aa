"""
Solver package for sensipod.
Crank-Nicolson time stepping and the optimal control driver.
"""
