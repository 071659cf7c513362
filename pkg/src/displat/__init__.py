"""Numerical toolkit for the discrete bi-Schroedinger operator H = Delta^2 + V on Z.

Modules
-------
lattice     windows, grid functions, potentials, difference operators
free        free kernels, decay fits, stationary-phase diagnostics
resolvent   resolvent boundary kernels, Birman-Schwinger matrix, checks
expansion   threshold expansions and inverse-singularity fits
classify    threshold classification and resonance functions
evolution   eigendecomposition oracle, Stone quadrature, perturbed decay
potentials  named and seeded test potentials
cli         batch front end (``displat``)
"""
__version__ = "0.1.0"

from .errors import DisplatError  # noqa: F401
from .lattice import (CompactPotential, GridFunction, GridWindow, KernelMatrix,  # noqa: F401
                      WeightedNormSpec)
