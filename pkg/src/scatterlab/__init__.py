"""Desk-scale numerical laboratory for two- and N-body quantum scattering.

Subpackages and modules
-----------------------
coords      Jacobi frames and cluster decompositions.
spectral    Periodic grids, unitary DFT, spectral traces and the free resolvent.
potentials  Pair potentials and cluster splitting.
dynamics    Split-step propagation and decay measurements.
scattering  Orbits, eikonal phases, identification operator, wave operators.
manybody    Partition of unity and cluster indicator weights.
observe     Uncertainty relations, cross sections, clocks, local-motion witness.
cli         Scenario runner.
"""

from scatterlab.errors import (
    ConfigError,
    ConvergenceError,
    DomainError,
    RangeError,
    ScatterlabError,
    SolverError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DomainError",
    "RangeError",
    "ScatterlabError",
    "SolverError",
    "__version__",
]
