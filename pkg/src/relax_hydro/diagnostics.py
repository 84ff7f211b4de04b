"""Functionals comparing an Euler trajectory with its relaxation limit.

Modulated energy, the relative-entropy balance, interaction-energy bounds,
coercivity and the epsilon-sweep fit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .entropy import EntropyLaw, relative_entropy, relative_pressure
from .fields import (PeriodicGrid, PotentialSpec, cached_kernel, convolve, divergence, gradient,
                     integrate, kernel_l1)
from .hyperbolic import EulerConfig, EulerRun, EulerState, energy_parts
from .parabolic import DiffusionState, LimitTrajectory, LimitVelocity


def total_energy(state: EulerState, cfg: EulerConfig) -> float:
    return energy_parts(state, cfg).total


def _interaction_pairing(grid, K: PotentialSpec, f, g=None) -> float:
    """``int f (K*g)`` with ``g = f`` by default."""
    if K.kind == "zero":
        return 0.0
    g = f if g is None else g
    return integrate(grid, f * convolve(grid, cached_kernel(K, grid), g))


@dataclass
class DiagnosticsRecord:
    t: float
    mass: float
    E_total: float
    E_free_bar: float
    theta: float
    theta_parts: Tuple[float, float, float]
    dissipation_residual: float = float("nan")
    l2_density_gap: float = float("nan")
    weighted_velocity_gap: float = float("nan")


def theta(state: EulerState, limit: Tuple[DiffusionState, LimitVelocity],
          cfg: EulerConfig) -> DiagnosticsRecord:
    """Modulated energy with its entropy, kinetic and interaction parts."""
    from .parabolic import free_energy

    dstate, lv = limit
    grid, eps = state.grid, cfg.epsilon
    rho, rho_bar = state.rho, dstate.rho_bar
    if np.any(rho_bar <= 0):
        raise ValueError("limit density must be strictly positive")
    du = state.velocity - lv.u_bar
    ent = integrate(grid, relative_entropy(cfg.law, rho, rho_bar)) / eps
    kin = 0.5 * integrate(grid, rho * np.sum(du**2, axis=0))
    inter = 0.0
    if cfg.C_k != 0:
        inter = 0.5 * cfg.C_k / eps * _interaction_pairing(grid, cfg.K, rho - rho_bar)
    gap = np.sqrt(integrate(grid, (rho - rho_bar) ** 2))
    vgap = np.sqrt(integrate(grid, rho * np.sum(du**2, axis=0)))
    E_bar = free_energy(grid, rho_bar, cfg.law, cfg.K, cfg.Phi, cfg.C_k) / eps
    return DiagnosticsRecord(state.t, state.mass(), total_energy(state, cfg), E_bar,
                             ent + kin + inter, (ent, kin, inter),
                             l2_density_gap=gap, weighted_velocity_gap=vgap)


# -- relative entropy balance ------------------------------------------------------

BALANCE_TERMS = ("damping", "strain", "residual_coupling", "pressure", "interaction")


@dataclass
class RelativeEntropyBalance:
    """Both sides of the relative-entropy identity on ``[t0, t]``.

    ``lhs`` is the change of the modulated energy; ``terms`` holds the
    time-integrated right-hand contributions, named in ``BALANCE_TERMS``.
    """

    t: float
    lhs: float
    terms: Dict[str, float]
    times: np.ndarray
    densities: Dict[str, np.ndarray] = field(repr=False, default_factory=dict)

    @property
    def rhs(self) -> float:
        return float(sum(self.terms.values()))

    def residual(self, perturb: Optional[Dict[str, float]] = None) -> float:
        """``|lhs - rhs| / max(|lhs|, |rhs|, 1e-30)``; ``perturb`` adds to terms."""
        rhs = self.rhs + sum((perturb or {}).values())
        return abs(self.lhs - rhs) / max(abs(self.lhs), abs(rhs), 1e-30)


def _balance_integrands(state: EulerState, dstate: DiffusionState, lv: LimitVelocity,
                        cfg: EulerConfig) -> Dict[str, float]:
    grid, eps = state.grid, cfg.epsilon
    rho, rho_bar, ub = state.rho, dstate.rho_bar, lv.u_bar
    du = state.velocity - ub
    grad_ub = np.stack([gradient(grid, ub[i]) for i in range(grid.dim)])  # [i, j] = d_j ub_i
    strain = np.einsum("ij...,i...,j...->...", grad_ub, du, du)
    div_ub = divergence(grid, ub)
    out = {
        "damping": -integrate(grid, rho * np.sum(du**2, axis=0)) / eps,
        "strain": -integrate(grid, rho * strain),
        "residual_coupling": -integrate(grid, rho / rho_bar * np.sum(lv.e_bar * du, axis=0)),
        "pressure": -integrate(grid, relative_pressure(cfg.law, rho, rho_bar) * div_ub) / eps,
        "interaction": 0.0,
    }
    if cfg.C_k != 0 and cfg.K.kind != "zero":
        dr = rho - rho_bar
        Kd = convolve(grid, cached_kernel(cfg.K, grid), dr)
        out["interaction"] = -cfg.C_k / eps * integrate(grid, Kd * divergence(grid, dr * ub))
    return out


def relative_entropy_balance(euler: EulerRun, limit: LimitTrajectory, cfg: EulerConfig,
                             t: Optional[float] = None) -> RelativeEntropyBalance:
    """Evaluate the identity on the Euler snapshots up to time ``t``.

    Time integrals use the trapezoid rule over the snapshots; the limit
    trajectory is interpolated onto the snapshot times.  Snapshots where the
    limit trajectory has only one-sided ``e_bar`` are dropped from the
    quadrature (their end values still define the left side).
    """
    snaps = [s for s in euler.snapshots if t is None or s.t <= t + 1e-12]
    if len(snaps) < 2:
        raise ValueError("need at least two snapshots")
    times, dens = [], {k: [] for k in BALANCE_TERMS}
    for s in snaps:
        dstate, lv = limit.at(s.t)
        if lv.e_bar is None:
            raise ValueError("limit trajectory too short for e_bar")
        if lv.e_bar_one_sided and s is not snaps[0] and s is not snaps[-1]:
            continue
        vals = _balance_integrands(s, dstate, lv, cfg)
        times.append(s.t)
        for k in BALANCE_TERMS:
            dens[k].append(vals[k])
    times = np.array(times)
    dens = {k: np.array(v) for k, v in dens.items()}
    terms = {k: float(np.trapezoid(v, times)) for k, v in dens.items()}
    th0 = theta(snaps[0], limit.at(snaps[0].t), cfg).theta
    th1 = theta(snaps[-1], limit.at(snaps[-1].t), cfg).theta
    return RelativeEntropyBalance(snaps[-1].t, th1 - th0, terms, times, dens)


def relative_entropy_residual(euler: EulerRun, limit: LimitTrajectory, cfg: EulerConfig,
                              t: Optional[float] = None) -> float:
    return relative_entropy_balance(euler, limit, cfg, t).residual()


# -- interaction bounds -------------------------------------------------------------

def hls_check(grid: PeriodicGrid, rho, rho_bar, K: PotentialSpec, law: EntropyLaw):
    """``(|int (rho-rho_bar) K*(rho-rho_bar)|, int h(rho|rho_bar), ratio)``."""
    dr = np.asarray(rho) - np.asarray(rho_bar)
    lhs = abs(_interaction_pairing(grid, K, dr))
    rhs = integrate(grid, relative_entropy(law, rho, rho_bar))
    if rhs == 0:
        ratio = 0.0 if lhs == 0 else float("inf")
    else:
        ratio = lhs / rhs
    return lhs, rhs, ratio


def coercivity_check(grid: PeriodicGrid, rho, rho_bar, K: PotentialSpec, law: EntropyLaw,
                     C_k: float) -> float:
    """``[int h(rho|rho_bar) + C_k/2 int dr K*dr] / int h(rho|rho_bar)``."""
    if C_k < 0:
        raise ValueError("C_k must be nonnegative")
    rhs = integrate(grid, relative_entropy(law, rho, rho_bar))
    if rhs == 0:
        return 1.0
    dr = np.asarray(rho) - np.asarray(rho_bar)
    return (rhs + 0.5 * C_k * _interaction_pairing(grid, K, dr)) / rhs


def young_bound(grid: PeriodicGrid, K: PotentialSpec) -> float:
    """Discrete ``||K||_1``, an upper bound for the interaction ratio when m = 2, k = 1."""
    return kernel_l1(grid, cached_kernel(K, grid))


# -- epsilon sweep ------------------------------------------------------------------

@dataclass
class SweepResult:
    epsilons: List[float]
    sup_theta: List[float]
    fitted_order: float
    constants: List[float]
    monotone: bool
    l2_density_gap: List[float] = field(default_factory=list)
    velocity_gap: List[float] = field(default_factory=list)
    theta0: List[float] = field(default_factory=list)

    @property
    def running_orders(self) -> List[float]:
        """Slope between consecutive sweep members (``nan`` for the first)."""
        out = [float("nan")]
        for i in range(1, len(self.epsilons)):
            out.append(float(np.log(self.sup_theta[i] / self.sup_theta[i - 1])
                             / np.log(self.epsilons[i] / self.epsilons[i - 1])))
        return out


def convergence_fit(sweep: Sequence[Tuple[float, float]], l2_gaps=None, velocity_gaps=None,
                    theta0=None) -> SweepResult:
    """Least-squares slope of ``log sup_theta`` against ``log eps``."""
    pairs = [(float(e), float(s)) for e, s in sweep]
    if len(pairs) < 3:
        raise ValueError("need at least three epsilon values")
    eps = np.array([p[0] for p in pairs])
    sup = np.array([p[1] for p in pairs])
    if np.any(np.diff(eps) >= 0):
        raise ValueError("epsilon values must be strictly decreasing")
    slope = float(np.polyfit(np.log(eps), np.log(sup), 1)[0])
    monotone = bool(np.all(np.diff(sup) < 0))
    return SweepResult(list(eps), list(sup), slope, list(sup / eps), monotone,
                       list(l2_gaps or []), list(velocity_gaps or []), list(theta0 or []))
