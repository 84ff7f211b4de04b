"""Subsolution scaffolding for the convex-integration existence argument.

Spectral Helmholtz splitting of the momentum, the ODE for its mean part,
the trace-free corrector ``H[v]``, the kinetic-energy gauge and the pointwise
max-eigenvalue inequality that defines the subsolution set.  Derivatives in
this module are spectral (exact on resolved Fourier modes); the Nyquist
wavenumber is treated as zero.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from .entropy import DomainError, EntropyLaw
from .fields import PeriodicGrid, PotentialSpec, integrate
from .forces import force_per_mass


# -- spectral calculus --------------------------------------------------------------

def _k2(grid):
    ks = grid.wavenumbers()
    return ks, sum(k**2 for k in ks)


def spectral_gradient(grid: PeriodicGrid, f) -> np.ndarray:
    ks, _ = _k2(grid)
    fh = np.fft.fftn(f)
    return np.stack([np.real(np.fft.ifftn(1j * k * fh)) for k in ks])


def spectral_divergence(grid: PeriodicGrid, F) -> np.ndarray:
    ks, _ = _k2(grid)
    acc = sum(1j * k * np.fft.fftn(F[a]) for a, k in enumerate(ks))
    return np.real(np.fft.ifftn(acc))


def inverse_laplacian(grid: PeriodicGrid, f) -> np.ndarray:
    """Mean-zero ``u`` with ``lap u = f``; ``f`` must have zero mean."""
    f = np.asarray(f, dtype=float)
    if abs(np.mean(f)) > 1e-12 * max(1.0, np.max(np.abs(f))):
        raise ValueError("inverse Laplacian needs mean-zero data")
    _, k2 = _k2(grid)
    fh = np.fft.fftn(f)
    with np.errstate(divide="ignore", invalid="ignore"):
        uh = np.where(k2 > 0, -fh / k2, 0.0)
    return np.real(np.fft.ifftn(uh))


# -- momentum decomposition ---------------------------------------------------------

def decompose_momentum(grid: PeriodicGrid, mom) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split ``mom = v + V + grad Psi`` with ``div v = 0`` and ``v, Psi`` mean-zero.

    Returns ``(v, V, Psi)`` where ``V`` has shape ``(dim,)``.
    """
    mom = np.asarray(mom, dtype=float)
    if mom.shape != (grid.dim,) + grid.shape:
        raise ValueError("momentum does not match the grid")
    axes = tuple(range(1, grid.dim + 1))
    V = mom.mean(axis=axes)
    ks, k2 = _k2(grid)
    mh = [np.fft.fftn(mom[a]) for a in range(grid.dim)]
    kdotm = sum(k * m for k, m in zip(ks, mh))
    with np.errstate(divide="ignore", invalid="ignore"):
        psi_h = np.where(k2 > 0, -1j * kdotm / k2, 0.0)
    Psi = np.real(np.fft.ifftn(psi_h))
    grad_psi = np.stack([np.real(np.fft.ifftn(1j * k * psi_h)) for k in ks])
    v = mom - V.reshape((-1,) + (1,) * grid.dim) - grad_psi
    return v, V, Psi


def recompose(grid: PeriodicGrid, v, V, Psi) -> np.ndarray:
    return v + np.reshape(V, (-1,) + (1,) * grid.dim) + spectral_gradient(grid, Psi)


# -- mean-momentum ODE ----------------------------------------------------------

def mean_force(grid: PeriodicGrid, rho, K: PotentialSpec, Phi: PotentialSpec,
               C_k: float = 1.0) -> np.ndarray:
    """``-|Omega|^-1 int rho (C_k grad K*rho + grad Phi)``, the ODE forcing."""
    f = -rho * force_per_mass(grid, rho, K, Phi, C_k)
    return np.array([integrate(grid, fa) for fa in f]) / grid.volume


def solve_V_ode(forcing, V0, dt: float) -> np.ndarray:
    """Exponential integrator for ``V' + V = G`` with ``G`` constant per step.

    ``forcing`` has one row per step; the result has one more row than
    ``forcing`` and starts at ``V0``.
    """
    G = np.atleast_2d(np.asarray(forcing, dtype=float))
    V = np.empty((G.shape[0] + 1, G.shape[1]))
    V[0] = V0
    decay = np.exp(-dt)
    for n, g in enumerate(G):
        V[n + 1] = g + (V[n] - g) * decay
    return V


# -- eigenvalues and the algebraic inequality -------------------------------------

def _symmetrize(A, tol=1e-10):
    A = np.asarray(A, dtype=float)
    At = np.swapaxes(A, -1, -2)
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if np.max(np.abs(A - At), initial=0.0) > tol * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (A + At)


def lambda_max(A) -> np.ndarray:
    """Largest eigenvalue of symmetric ``d x d`` matrices (batched over leading axes).

    Closed form for ``d = 2``; LAPACK ``eigvalsh`` otherwise.
    """
    A = _symmetrize(A)
    d = A.shape[-1]
    if d == 1:
        return A[..., 0, 0]
    if d == 2:
        a, b, c = A[..., 0, 0], A[..., 0, 1], A[..., 1, 1]
        return 0.5 * (a + c) + np.hypot(0.5 * (a - c), b)
    return np.linalg.eigvalsh(A)[..., -1]


def algebraic_inequality_margin(M, r, H):
    """``(d/2) lambda_max[M (x) M / r - H] - |M|^2 / (2 r)``; never negative.

    Batched over leading axes of ``M`` (``(..., d)``), ``r`` and ``H``
    (``(..., d, d)``).
    """
    M = np.asarray(M, dtype=float)
    H = np.asarray(H, dtype=float)
    r = np.asarray(r, dtype=float)
    if not np.all(r > 0):
        raise DomainError("r must be positive")
    d = M.shape[-1]
    tr = np.trace(H, axis1=-2, axis2=-1)
    if np.max(np.abs(tr)) > 1e-10 * max(1.0, float(np.max(np.abs(H)))):
        raise ValueError("H must be trace-free")
    outer = M[..., :, None] * M[..., None, :] / r[..., None, None]
    return 0.5 * d * lambda_max(outer - H) - 0.5 * np.sum(M**2, axis=-1) / r


# -- the subsolution frame ----------------------------------------------------------

@dataclass
class SubsolutionFrame:
    grid: PeriodicGrid
    v: np.ndarray
    V: np.ndarray
    Psi: np.ndarray
    dPsi_dt: np.ndarray
    H_field: np.ndarray   # shape (dim, dim, *grid.shape)
    Pi: float
    e_gauge: np.ndarray
    rhs: np.ndarray       # mean-zero forcing the corrector balances

    @property
    def momentum(self) -> np.ndarray:
        return recompose(self.grid, self.v, self.V, self.Psi)


def solve_corrector(grid: PeriodicGrid, f) -> Tuple[np.ndarray, np.ndarray]:
    """Solve ``-div(grad w + grad w^T - (2/d) div w I) = f`` for mean-zero ``f``.

    Returns ``(w, H)`` with ``H`` the symmetric trace-free matrix field.
    """
    d = grid.dim
    if d < 2:
        raise ValueError("the corrector needs dim >= 2")
    ks, k2 = _k2(grid)
    fh = np.stack([np.fft.fftn(f[a]) for a in range(d)])
    kdotf = sum(k * fa for k, fa in zip(ks, fh))
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(k2 > 0, 1.0 / k2, 0.0)
        # symbol |k|^2 I + (1 - 2/d) k k^T, inverted on the longitudinal and
        # transverse parts separately
        long_fac = inv * inv * ((1.0 / (2.0 - 2.0 / d)) - 1.0)
    wh = np.stack([inv * fh[a] + long_fac * ks[a] * kdotf for a in range(d)])
    w = np.real(np.fft.ifftn(wh, axes=tuple(range(1, d + 1))))
    grad_w = np.stack([np.stack([np.real(np.fft.ifftn(1j * ks[j] * wh[i])) for j in range(d)])
                       for i in range(d)])  # [i, j] = d_j w_i
    div_w = sum(grad_w[i, i] for i in range(d))
    H = grad_w + np.swapaxes(grad_w, 0, 1)
    for i in range(d):
        H[i, i] -= 2.0 / d * div_w
    return w, H


def corrector_residual(grid: PeriodicGrid, H, f) -> float:
    """Max-norm of ``-div H - f`` (spectral divergence, row-wise)."""
    res = np.stack([-spectral_divergence(grid, H[i]) for i in range(grid.dim)]) - f
    return float(np.max(np.abs(res)))


def build_frame(grid: PeriodicGrid, rho, rho_t, rho_tt, v, V, law: EntropyLaw,
                K: PotentialSpec, Phi: PotentialSpec, C_k: float, Pi: float) -> SubsolutionFrame:
    """Assemble the frame for a prescribed density history.

    ``rho_t`` and ``rho_tt`` are the first two time derivatives of ``rho`` at
    the frame time; ``Psi`` solves ``lap Psi = -rho_t`` and ``dPsi_dt`` solves
    ``lap dPsi_dt = -rho_tt``.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("density must be positive")
    Psi = inverse_laplacian(grid, -np.asarray(rho_t, float))
    dPsi = inverse_laplacian(grid, -np.asarray(rho_tt, float))
    V = np.asarray(V, dtype=float)
    frame_mom = recompose(grid, v, V, Psi)
    forcing = -rho * force_per_mass(grid, rho, K, Phi, C_k) - frame_mom
    axes = tuple(range(1, grid.dim + 1))
    f = forcing - forcing.mean(axis=axes, keepdims=True)
    _, H = solve_corrector(grid, f)
    e_gauge = Pi - 0.5 * grid.dim * (law.pressure(rho) + dPsi)
    return SubsolutionFrame(grid, np.asarray(v, float), V, Psi, dPsi, H, float(Pi), e_gauge, f)


def with_gauge(frame: SubsolutionFrame, Pi: float, law: EntropyLaw, rho) -> SubsolutionFrame:
    """Copy of ``frame`` with a new ``Pi`` and the matching ``e_gauge``."""
    e = Pi - 0.5 * frame.grid.dim * (law.pressure(rho) + frame.dPsi_dt)
    return replace(frame, Pi=float(Pi), e_gauge=e)


def _field_matrix(T):
    """``(d, d, *shape)`` -> ``(*shape, d, d)``."""
    return np.moveaxis(np.moveaxis(T, 0, -1), 0, -1)


def subsolution_excess(frame: SubsolutionFrame, F, rho, law: EntropyLaw) -> np.ndarray:
    """``(d/2) lambda_max[M (x) M / rho - F + H] + (d/2)(p(rho) + dPsi/dt)``,
    i.e. the margin plus ``Pi``."""
    d = frame.grid.dim
    M = np.moveaxis(frame.momentum, 0, -1)
    A = M[..., :, None] * M[..., None, :] / np.asarray(rho)[..., None, None]
    A = A - _field_matrix(F) + _field_matrix(frame.H_field)
    return 0.5 * d * lambda_max(A) + 0.5 * d * (law.pressure(rho) + frame.dPsi_dt)


def x0_margin(frame: SubsolutionFrame, F, rho, law: EntropyLaw):
    """Pointwise subsolution margin and the smallest admissible ``Pi_0``.

    A cell passes the strict inequality where the margin is negative.
    ``Pi_0`` exceeds the largest excess by a relative 1e-12, so the margin
    with ``Pi = Pi_0`` is negative everywhere.
    """
    excess = subsolution_excess(frame, F, rho, law)
    top = float(np.max(excess))
    pi0 = top + 1e-12 * max(1.0, abs(top))
    if pi0 <= 0:
        pi0 = np.finfo(float).tiny
    return excess - frame.Pi, pi0


def kinetic_bound_violations(frame: SubsolutionFrame, F, rho, law: EntropyLaw) -> int:
    """Count cells with negative margin whose kinetic energy breaks
    ``|M|^2 / 2 rho < Pi - (d/2)(p + dPsi/dt)``."""
    margin, _ = x0_margin(frame, F, rho, law)
    M = frame.momentum
    kin = 0.5 * np.sum(M**2, axis=0) / rho
    ok = kin < frame.e_gauge
    return int(np.sum((margin < 0) & ~ok))
