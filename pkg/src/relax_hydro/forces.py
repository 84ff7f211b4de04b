"""Potential forces shared by the hyperbolic and parabolic solvers."""
from __future__ import annotations

import numpy as np

from .entropy import EntropyLaw
from .fields import PeriodicGrid, PotentialSpec, cached_kernel, cached_potential, convolve, gradient


def interaction_potential(grid: PeriodicGrid, rho, K: PotentialSpec) -> np.ndarray:
    return convolve(grid, cached_kernel(K, grid), rho)


def force_per_mass(grid: PeriodicGrid, rho, K: PotentialSpec, Phi: PotentialSpec,
                   C_k: float) -> np.ndarray:
    """``C_k grad(K*rho) + grad(Phi)``; the force on the fluid is ``-rho`` times this."""
    _, grad_phi = cached_potential(Phi, grid)
    if C_k == 0 or K.kind == "zero":
        return np.array(grad_phi)
    return C_k * gradient(grid, interaction_potential(grid, rho, K)) + grad_phi


def limit_velocity(grid: PeriodicGrid, rho, law: EntropyLaw, K: PotentialSpec,
                   Phi: PotentialSpec, C_k: float) -> np.ndarray:
    """``-grad h'(rho) - C_k grad(K*rho) - grad(Phi)``."""
    return -gradient(grid, law.dh(rho)) - force_per_mass(grid, rho, K, Phi, C_k)
