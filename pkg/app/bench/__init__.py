"""
Benchmark package for sensipod.
Parameter sweeps over reduction methods and result emission.
"""
