"""Numerical laboratory for band-edge initial scale estimates of random
Schrodinger operators: discretized box Hamiltonians, good-configuration
event combinatorics, eigenvalue lifting, and Monte Carlo window statistics.
"""

__version__ = "0.1.0"
