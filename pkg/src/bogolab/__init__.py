"""Numerical laboratory for quadratic bosonic Hamiltonians with rank-one form factors.

The package diagonalizes H = dGamma(omega) + lambda * :(a*(f) + a(f))^2: on a
discretized one-boson space, cross-checks the quasi-particle dispersion
xi = (omega^2 + 4 lambda omega^{1/2} |f><f| omega^{1/2})^{1/2} against
resolvent integral formulas, runs ultraviolet cutoff flows with energy and
coupling counterterms, and verifies everything against a truncated-Fock
exact-diagonalization oracle.
"""

__version__ = "0.1.0"

from . import bogoliubov, fock, model, numerics, rankone, renorm

__all__ = ["bogoliubov", "fock", "model", "numerics", "rankone", "renorm", "__version__"]
