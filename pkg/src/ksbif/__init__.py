"""Bifurcation toolkit for the Kuramoto-Sivashinsky equation with Dirichlet BCs.

Subpackages follow the pipeline: grid discretization, analytic Green's-function
tables, semi-implicit time stepping, symmetry operations, Arnoldi spectra,
Newton-Krylov solves, pseudo-arclength continuation, reduced bifurcation
coefficients, and a command-line driver.
"""

__version__ = "0.1.0"
