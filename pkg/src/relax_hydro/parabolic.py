"""Explicit solver for the limiting aggregation-diffusion equation and the
reconstruction of its velocity ``u_bar`` and momentum residual ``e_bar``."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .entropy import EntropyLaw
from .fields import (PeriodicGrid, PotentialSpec, cached_kernel, cached_potential, convolve,
                     divergence, integrate, laplacian, tensor_divergence)
from .forces import force_per_mass, limit_velocity
from .hyperbolic import SolverAbort


@dataclass
class DiffusionState:
    grid: PeriodicGrid
    rho_bar: np.ndarray
    t: float = 0.0


def diffusion_rhs(grid: PeriodicGrid, rho_bar, law: EntropyLaw, K: PotentialSpec,
                  Phi: PotentialSpec, C_k: float) -> np.ndarray:
    """``lap p(rho) + div(rho (C_k grad K*rho + grad Phi))`` in conservation form."""
    return laplacian(grid, law.pressure(rho_bar)) + divergence(
        grid, rho_bar * force_per_mass(grid, rho_bar, K, Phi, C_k))


def free_energy(grid: PeriodicGrid, rho_bar, law: EntropyLaw, K: PotentialSpec,
                Phi: PotentialSpec, C_k: float) -> float:
    """``int h(rho) + C_k (K*rho) rho / 2 + rho Phi``."""
    phi, _ = cached_potential(Phi, grid)
    E = integrate(grid, law.h(rho_bar) + rho_bar * phi)
    if C_k != 0 and K.kind != "zero":
        E += 0.5 * C_k * integrate(grid, convolve(grid, cached_kernel(K, grid), rho_bar) * rho_bar)
    return E


def diffusion_dt(grid: PeriodicGrid, rho_bar, law, K, Phi, C_k, dt_factor: float = 0.2) -> float:
    dt = dt_factor * grid.dx**2 / float(np.max(law.dpressure(rho_bar)))
    drift = float(np.max(np.abs(force_per_mass(grid, rho_bar, K, Phi, C_k))))
    if drift > 0:
        dt = min(dt, dt_factor * grid.dx / drift)
    return dt


@dataclass
class DiffusionRun:
    grid: PeriodicGrid
    times: np.ndarray
    rho: np.ndarray          # stacked snapshots, leading axis is time
    free_energy: np.ndarray  # at every step, not only at snapshots
    energy_times: np.ndarray
    max_energy_increase: float

    @property
    def final(self) -> DiffusionState:
        return DiffusionState(self.grid, self.rho[-1], float(self.times[-1]))


def run_diffusion(grid: PeriodicGrid, rho0, law: EntropyLaw, K: PotentialSpec,
                  Phi: PotentialSpec, C_k: float, t_end: float, dt_factor: float = 0.2,
                  dt_max: Optional[float] = None, stride: int = 1,
                  save_times=None) -> DiffusionRun:
    """Forward-Euler integration to ``t_end``.

    Snapshots are kept every ``stride`` steps, or exactly at ``save_times``
    when given (the step is shortened to land on them).  The free energy is
    tracked every step; ``max_energy_increase`` is the largest one-step rise.
    """
    rho = np.array(rho0, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("limit density must be strictly positive")
    targets = None if save_times is None else sorted(float(s) for s in save_times)
    t, step = 0.0, 0
    times: List[float] = [0.0]
    snaps = [rho.copy()]
    E = [free_energy(grid, rho, law, K, Phi, C_k)]
    Et = [0.0]
    tgt_i = 1 if targets and targets[0] == 0.0 else 0
    while t < t_end * (1 - 1e-14):
        dt = diffusion_dt(grid, rho, law, K, Phi, C_k, dt_factor)
        if dt_max is not None:
            dt = min(dt, dt_max)
        dt = min(dt, t_end - t)
        hit = False
        if targets is not None and tgt_i < len(targets) and t + dt >= targets[tgt_i] - 1e-14:
            dt = targets[tgt_i] - t
            hit = True
        if dt > 0:
            rho = rho + dt * diffusion_rhs(grid, rho, law, K, Phi, C_k)
            t += dt
            step += 1
        if not np.all(np.isfinite(rho)) or np.any(rho <= 0):
            raise SolverAbort(f"limit density lost positivity at t={t:.6g}",
                              DiffusionState(grid, snaps[-1], times[-1]))
        if dt > 0:
            E.append(free_energy(grid, rho, law, K, Phi, C_k))
            Et.append(t)
        if hit:
            tgt_i += 1
            while tgt_i < len(targets) and targets[tgt_i] <= t + 1e-14:
                tgt_i += 1
        if (targets is None and step % stride == 0) or hit:
            if times[-1] != t:
                times.append(t)
                snaps.append(rho.copy())
    if times[-1] != t:
        times.append(t)
        snaps.append(rho.copy())
    E = np.array(E)
    inc = float(np.max(np.diff(E))) if len(E) > 1 else 0.0
    return DiffusionRun(grid, np.array(times), np.array(snaps), E, np.array(Et), inc)


@dataclass
class LimitVelocity:
    u_bar: np.ndarray
    e_bar: Optional[np.ndarray]
    t: float
    e_bar_one_sided: bool = False


def reconstruct_u_bar(state: DiffusionState, law: EntropyLaw, K: PotentialSpec,
                      Phi: PotentialSpec, C_k: float) -> LimitVelocity:
    """Limit velocity of a single state; ``e_bar`` needs a trajectory."""
    u = limit_velocity(state.grid, state.rho_bar, law, K, Phi, C_k)
    return LimitVelocity(u, None, state.t)


class LimitTrajectory:
    """A stored limit run with ``u_bar`` and ``e_bar`` at every snapshot and
    linear interpolation in time."""

    def __init__(self, run: DiffusionRun, law: EntropyLaw, K: PotentialSpec,
                 Phi: PotentialSpec, C_k: float):
        self.grid = run.grid
        self.times = run.times
        self.rho = run.rho
        g = self.grid
        self.u = np.array([limit_velocity(g, r, law, K, Phi, C_k) for r in run.rho])
        mom = self.rho[:, None] * self.u
        if len(self.times) >= 3:
            dmom = np.gradient(mom, self.times, axis=0, edge_order=2)
        elif len(self.times) == 2:
            dmom = np.repeat(((mom[1] - mom[0]) / (self.times[1] - self.times[0]))[None], 2, 0)
        else:
            dmom = None
        if dmom is None:
            self.e = None
        else:
            conv = np.array([tensor_divergence(g, m[:, None] * u[None, :])
                             for m, u in zip(mom, self.u)])
            self.e = dmom + conv

    def _bracket(self, t):
        ts = self.times
        if t < ts[0] - 1e-12 or t > ts[-1] + 1e-12:
            raise ValueError(f"t={t} outside the limit trajectory [{ts[0]}, {ts[-1]}]")
        i = int(np.clip(np.searchsorted(ts, t) - 1, 0, len(ts) - 2)) if len(ts) > 1 else 0
        if len(ts) == 1:
            return 0, 0, 0.0
        w = (t - ts[i]) / (ts[i + 1] - ts[i])
        return i, i + 1, float(np.clip(w, 0.0, 1.0))

    def _interp(self, arr, t):
        i, j, w = self._bracket(t)
        return (1 - w) * arr[i] + w * arr[j]

    def at(self, t: float):
        """``(DiffusionState, LimitVelocity)`` at time ``t``."""
        i, j, w = self._bracket(t)
        rho = (1 - w) * self.rho[i] + w * self.rho[j]
        u = (1 - w) * self.u[i] + w * self.u[j]
        e = None if self.e is None else (1 - w) * self.e[i] + w * self.e[j]
        one_sided = self.e is not None and (i == 0 or j == len(self.times) - 1) and \
            (w == 0 and i == 0 or w == 1 and j == len(self.times) - 1)
        return DiffusionState(self.grid, rho, t), LimitVelocity(u, e, t, one_sided)
