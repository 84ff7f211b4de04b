"""Scenario drivers shared by the command line and the acceptance suite."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import RunConfig
from .diagnostics import (SweepResult, coercivity_check, convergence_fit, hls_check,
                          relative_entropy_balance, theta)
from .entropy import EntropyLaw, certify_bounds, relative_entropy, relative_pressure
from .fields import PeriodicGrid, integrate
from .hyperbolic import EulerRun, run_euler, well_prepared_velocity
from .parabolic import DiffusionRun, LimitTrajectory, run_diffusion
from .subsolution import (SubsolutionFrame, algebraic_inequality_margin, build_frame,
                          corrector_residual, decompose_momentum, kinetic_bound_violations,
                          mean_force, recompose, solve_V_ode, spectral_divergence, with_gauge,
                          x0_margin)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


# -- initial data -------------------------------------------------------------------

def initial_density(cfg: RunConfig) -> np.ndarray:
    g, ini = cfg.grid, cfg.initial
    X = g.coords()
    prof = ini["profile"]
    if prof == "bump":
        r2 = sum(x**2 for x in X)
        return ini.get("base", 0.5) + ini.get("amplitude", 1.0) * np.exp(
            -r2 / (2 * ini.get("width", 0.4) ** 2))
    if prof == "mixed-modes":
        if g.dim < 2:
            raise ValueError("mixed-modes profile needs dim >= 2")
        x, y = X[0], X[1]
        L = g.L
        return (ini.get("base", 1.0)
                + ini.get("a1", 0.3) * np.cos(np.pi * x / L) * np.cos(np.pi * y / L)
                + ini.get("a2", 0.2) * np.sin(np.pi * (x + 2 * y) / L))
    if prof == "decaying-mode":
        return decaying_mode(cfg, 0.0)[0]
    raise ValueError(f"unknown profile {prof!r}")


def initial_velocity(cfg: RunConfig, rho0, eps: float) -> np.ndarray:
    if cfg.initial.get("velocity") == "well-prepared":
        return well_prepared_velocity(cfg.grid, rho0, cfg.euler_config(eps))
    return cfg.grid.vector_zeros()


def decaying_mode(cfg: RunConfig, t: float):
    """``rho = base + a e^-t c(x)`` and its first two time derivatives, with
    ``c = cos(pi x_0/L + 1/2) prod_i (1 + cos(pi x_i/L)) / 2`` (mean zero).
    The phase keeps the mean force, and hence ``V``, from vanishing by
    symmetry."""
    g, ini = cfg.grid, cfg.initial
    X = g.coords()
    c = np.cos(np.pi * X[0] / g.L + 0.5)
    for x in X[1:]:
        c = c * 0.5 * (1 + np.cos(np.pi * x / g.L))
    a = ini.get("amplitude", 0.3) * np.exp(-t)
    return ini.get("base", 1.0) + a * c, -a * c, a * c


# -- single runs --------------------------------------------------------------------

def euler_run(cfg: RunConfig, eps: Optional[float] = None, observers=()) -> EulerRun:
    eps = cfg.epsilon if eps is None else eps
    rho0 = initial_density(cfg)
    return run_euler(cfg.euler_config(eps), cfg.grid, rho0, initial_velocity(cfg, rho0, eps),
                     observers=observers)


def limit_run(cfg: RunConfig, save_times=None) -> DiffusionRun:
    return run_diffusion(cfg.grid, initial_density(cfg), cfg.law, cfg.K, cfg.Phi, cfg.C_k,
                         cfg.t_end, dt_factor=cfg.limit_dt_factor, dt_max=cfg.limit_dt_max,
                         stride=cfg.snapshot_stride, save_times=save_times)


def paired_runs(cfg: RunConfig, eps: float) -> Tuple[EulerRun, LimitTrajectory, DiffusionRun]:
    """Euler run and a limit run saved on the same snapshot times."""
    run = euler_run(cfg, eps)
    lim = limit_run(cfg, save_times=run.times)
    return run, LimitTrajectory(lim, cfg.law, cfg.K, cfg.Phi, cfg.C_k), lim


def energy_checks(run: EulerRun, slack: float = 1e-8) -> List[Check]:
    E = np.array([r.E_total for r in run.records])
    mass = np.array([r.mass for r in run.records])
    drift = float(np.max(np.abs(mass - mass[0])) / mass[0])
    rise = float(np.max(np.diff(E))) if len(E) > 1 else 0.0
    return [
        Check("mass conservation", drift <= 1e-12, f"relative drift {drift:.3e} (<= 1e-12)"),
        Check("energy dissipation", rise <= slack * abs(E[0]),
              f"max one-step rise {rise:.3e} (<= {slack:g} E(0) = {slack * abs(E[0]):.3e})"),
    ]


def limit_energy_check(lim: DiffusionRun, slack: float = 1e-8) -> Check:
    E0 = abs(lim.free_energy[0])
    return Check("limit free-energy monotonicity", lim.max_energy_increase <= slack * E0,
                 f"max one-step rise {lim.max_energy_increase:.3e} (<= {slack * E0:.3e})")


# -- relative-entropy identity under refinement -----------------------------------

def balance_refinement(cfg: RunConfig, ns: Sequence[int]) -> Tuple[List[float], List[float]]:
    """Residual of the relative-entropy identity for each grid size in ``ns``
    and the observed orders between consecutive sizes."""
    from dataclasses import replace

    res = []
    for n in ns:
        sub = replace(cfg, grid=PeriodicGrid(cfg.grid.dim, n, cfg.grid.L))
        run, traj, _ = paired_runs(sub, sub.epsilon)
        res.append(relative_entropy_balance(run, traj, sub.euler_config()).residual())
    orders = [float(np.log2(res[i] / res[i + 1])) for i in range(len(res) - 1)]
    return res, orders


# -- epsilon sweep ------------------------------------------------------------------

@dataclass
class SweepMember:
    epsilon: float
    times: np.ndarray
    theta: np.ndarray
    l2_gap: np.ndarray
    velocity_gap: np.ndarray
    mass0: float
    c_star: np.ndarray
    coercivity: np.ndarray
    coercivity_floor: np.ndarray
    steps: int

    @property
    def sup_theta(self) -> float:
        return float(np.max(self.theta))

    @property
    def theta0(self) -> float:
        return float(self.theta[0])

    @property
    def l2_gap_max(self) -> float:
        return float(np.max(self.l2_gap))

    @property
    def velocity_gap_l2l2(self) -> float:
        """``(int_0^T int rho |u - u_bar|^2)^(1/2)``."""
        if len(self.times) < 2:
            return float(self.velocity_gap[0])
        return float(np.sqrt(np.trapezoid(self.velocity_gap**2, self.times)))


def sweep_member(cfg: RunConfig, eps: float) -> SweepMember:
    run, traj, _ = paired_runs(cfg, eps)
    ecfg = cfg.euler_config(eps)
    recs, cs, co, floor = [], [], [], []
    for s in run.snapshots:
        dstate, lv = traj.at(s.t)
        recs.append(theta(s, (dstate, lv), ecfg))
        _, _, c = hls_check(cfg.grid, s.rho, dstate.rho_bar, cfg.K, cfg.law)
        cs.append(c)
        if c > 0:
            co.append(coercivity_check(cfg.grid, s.rho, dstate.rho_bar, cfg.K, cfg.law, cfg.C_k))
            floor.append(1 - cfg.C_k * c / 2)
    return SweepMember(
        eps, np.array([r.t for r in recs]), np.array([r.theta for r in recs]),
        np.array([r.l2_density_gap for r in recs]),
        np.array([r.weighted_velocity_gap for r in recs]), recs[0].mass, np.array(cs),
        np.array(co), np.array(floor), len(run.records) - 1)


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("RELAX_HYDRO_THREADS", "1")))
    except ValueError:
        return 1


def run_sweep(cfg: RunConfig, threads: Optional[int] = None) -> Tuple[List[SweepMember], SweepResult]:
    """One well-prepared trajectory per epsilon, largest first.

    Trajectories are independent; with ``threads > 1`` they run concurrently
    and results are gathered in epsilon order, so output is unchanged.
    """
    eps = sorted(cfg.epsilons, reverse=True)
    threads = thread_count() if threads is None else threads
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            members = list(pool.map(lambda e: sweep_member(cfg, e), eps))
    else:
        members = [sweep_member(cfg, e) for e in eps]
    fit = convergence_fit([(m.epsilon, m.sup_theta) for m in members],
                          [m.l2_gap_max for m in members],
                          [m.velocity_gap_l2l2 for m in members],
                          [m.theta0 for m in members])
    return members, fit


SWEEP_COLUMNS = ("epsilon", "sup_theta", "theta0", "fitted_order_running",
                 "l2_density_gap_max", "velocity_gap_l2l2")


def sweep_rows(members: List[SweepMember], fit: SweepResult):
    for m, order in zip(members, fit.running_orders):
        yield [m.epsilon, m.sup_theta, m.theta0, order, m.l2_gap_max, m.velocity_gap_l2l2]


def sweep_checks(members: List[SweepMember], fit: SweepResult, C_k: float) -> List[Check]:
    sup = [m.sup_theta for m in members]
    wp = max(m.theta0 / m.mass0 for m in members)
    l2 = [m.l2_gap_max for m in members]
    vg = [m.velocity_gap_l2l2 for m in members]
    c_star = max(float(np.max(m.c_star)) for m in members)
    viol = sum(int(np.sum(m.coercivity < m.coercivity_floor - 1e-12)) for m in members)
    return [
        Check("well-prepared data", wp <= 1e-6, f"max theta(0)/mass {wp:.3e} (<= 1e-6)"),
        Check("sup theta strictly decreasing", bool(np.all(np.diff(sup) < 0)),
              "sup theta " + ", ".join(f"{s:.4e}" for s in sup)),
        Check("fitted order", fit.fitted_order >= 0.8, f"order {fit.fitted_order:.4f} (>= 0.8)"),
        Check("density gap decreasing", bool(np.all(np.diff(l2) < 0)),
              "L_inf L2 gap " + ", ".join(f"{s:.4e}" for s in l2)),
        Check("velocity gap decreasing", bool(np.all(np.diff(vg) < 0)),
              "weighted velocity gap " + ", ".join(f"{s:.4e}" for s in vg)),
        Check("interaction constant finite", bool(np.isfinite(c_star)),
              f"max C_star_est {c_star:.4e}"),
        Check("smallness condition", C_k < 2 / c_star if c_star > 0 else True,
              f"C_k {C_k:g} < 2/C_star_est = {2 / c_star if c_star > 0 else np.inf:.4e}"),
        Check("coercivity", viol == 0, f"{viol} snapshots below 1 - C_k C_star_est / 2"),
    ]


# -- randomized property suites ----------------------------------------------------

def alg_in_suite(rng: np.random.Generator, samples: int, dim: int) -> Tuple[float, int]:
    """Worst margin of the algebraic inequality over random draws, and the count
    below -1e-12."""
    M = rng.normal(size=(samples, dim)) * rng.lognormal(0, 1, (samples, 1))
    r = rng.lognormal(0, 1, samples)
    B = rng.normal(size=(samples, dim, dim)) * rng.lognormal(0, 1, (samples, 1, 1))
    H = 0.5 * (B + np.swapaxes(B, 1, 2))
    tr = np.trace(H, axis1=1, axis2=2)
    H = H - tr[:, None, None] / dim * np.eye(dim)
    out = algebraic_inequality_margin(M, r, H)
    return float(out.min()), int(np.sum(out < -1e-12))


def entropy_suite(law: EntropyLaw, rng: np.random.Generator, samples: int) -> List[Check]:
    out = []
    rho = rng.uniform(0.2, 5.0, 64)
    hstep = 1e-5
    dh = (law.h(rho + hstep) - law.h(rho - hstep)) / (2 * hstep)
    p_fd = rho * dh - law.h(rho)
    err = float(np.max(np.abs(p_fd - law.pressure(rho)) / np.maximum(1, np.abs(law.pressure(rho)))))
    out.append(Check("thermodynamic consistency", err <= 1e-6, f"max error {err:.2e}"))
    seed = int(rng.integers(2**31))
    cert = certify_bounds(law, (0.01, 10.0), (0.1, 5.0), samples, seed=seed)
    out.append(Check("entropy lower bounds", cert.passed,
                     f"{cert.regime}, worst margin {cert.worst_margin:.3e}"))
    if law.is_pure and law.m > 1:
        r, rb = rng.uniform(0.01, 10, samples), rng.uniform(0.1, 5, samples)
        hr = relative_entropy(law, r, rb)
        pr = relative_pressure(law, r, rb)
        e = float(np.max(np.abs(pr - (law.m - 1) * hr) / np.maximum(1, np.abs(pr))))
        out.append(Check("relative pressure identity", e <= 1e-12, f"max error {e:.2e}"))
    return out


def decomposition_suite(rng: np.random.Generator, grid: PeriodicGrid) -> Check:
    g = grid if grid.dim >= 2 else PeriodicGrid(2, 32, grid.L)
    mom = rng.normal(size=(g.dim,) + g.shape)
    v, V, Psi = decompose_momentum(g, mom)
    v2, V2, Psi2 = decompose_momentum(g, recompose(g, v, V, Psi))
    err = max(np.max(np.abs(v2 - v)), np.max(np.abs(V2 - V)), np.max(np.abs(Psi2 - Psi)))
    div = float(np.max(np.abs(spectral_divergence(g, v))))
    return Check("decomposition idempotence", err <= 1e-12 and div <= 1e-10,
                 f"idempotence error {err:.2e}, max |div v| {div:.2e}")


def interaction_suite(cfg: RunConfig, rng: np.random.Generator) -> List[Check]:
    g = cfg.grid
    worst, c_max = np.inf, 0.0
    for _ in range(8):
        rho_bar = 1 + 0.3 * rng.uniform(-1, 1, g.shape)
        rho = rho_bar * (1 + 0.2 * rng.uniform(-1, 1, g.shape))
        _, _, c = hls_check(g, rho, rho_bar, cfg.K, cfg.law)
        c_max = max(c_max, c)
        ratio = coercivity_check(g, rho, rho_bar, cfg.K, cfg.law, cfg.C_k)
        worst = min(worst, ratio - (1 - cfg.C_k * c / 2))
    return [Check("interaction constant finite", bool(np.isfinite(c_max)), f"max C_star_est {c_max:.3e}"),
            Check("coercivity", worst >= -1e-12, f"min ratio excess {worst:.2e}")]


def verify_suites(cfg: RunConfig, seed: Optional[int] = None) -> List[Check]:
    ss = np.random.SeedSequence(cfg.seed if seed is None else seed)
    rngs = [np.random.default_rng(s) for s in ss.spawn(5)]
    checks = entropy_suite(cfg.law, rngs[0], cfg.entropy_samples)
    for i, d in enumerate((2, 3)):
        worst, bad = alg_in_suite(rngs[1 + i], cfg.samples, d)
        checks.append(Check(f"algebraic inequality d={d}", bad == 0,
                            f"{cfg.samples} draws, worst margin {worst:.3e}"))
    checks.append(decomposition_suite(rngs[3], cfg.grid))
    checks.extend(interaction_suite(cfg, rngs[4]))
    return checks


# -- subsolution study --------------------------------------------------------------

@dataclass
class SubsolutionStudy:
    frame: SubsolutionFrame
    margin: np.ndarray
    Pi0: float
    violations_at_pi0: int
    violations_below: int
    kinetic_violations: int
    corrector_residual: float
    rho: np.ndarray
    F: np.ndarray
    checks: List[Check] = field(default_factory=list)


def trace_free_strain(grid: PeriodicGrid, amp: float) -> np.ndarray:
    """Symmetric trace-free matrix field ``amp [[c, s], [s, -c]]``-like in any dim."""
    d = grid.dim
    X = grid.coords()
    F = np.zeros((d, d) + grid.shape)
    c = np.cos(np.pi * X[0] / grid.L)
    s = np.sin(np.pi * X[-1] / grid.L)
    F[0, 0], F[d - 1, d - 1] = amp * c, -amp * c
    if d > 1:
        F[0, d - 1] = F[d - 1, 0] = amp * s
    return F


def subsolution_study(cfg: RunConfig, n_steps: int = 50) -> SubsolutionStudy:
    g = cfg.grid
    if g.dim < 2:
        raise ValueError("the subsolution study needs dim >= 2")
    T = cfg.t_end
    dt = T / n_steps if T > 0 else 0.0
    G = [mean_force(g, decaying_mode(cfg, i * dt)[0], cfg.K, cfg.Phi, cfg.C_k)
         for i in range(n_steps)]
    V = solve_V_ode(G, np.zeros(g.dim), dt)[-1] if T > 0 else np.zeros(g.dim)
    rho, rho_t, rho_tt = decaying_mode(cfg, T)
    X = g.coords()
    # divergence-free swirl from the stream function sin(pi x/L) sin(2 pi y/L)
    k1, k2 = np.pi / g.L, 2 * np.pi / g.L
    v = g.vector_zeros()
    v[0] = -k2 * np.sin(k1 * X[0]) * np.cos(k2 * X[1])
    v[1] = k1 * np.cos(k1 * X[0]) * np.sin(k2 * X[1])
    v *= cfg.initial.get("swirl", 0.2)
    F = trace_free_strain(g, cfg.initial.get("strain", 0.1))
    frame = build_frame(g, rho, rho_t, rho_tt, v, V, cfg.law, cfg.K, cfg.Phi, cfg.C_k, 0.0)
    _, pi0 = x0_margin(frame, F, rho, cfg.law)
    frame = with_gauge(frame, pi0, cfg.law, rho)
    margin, _ = x0_margin(frame, F, rho, cfg.law)
    low = with_gauge(frame, 0.9 * pi0, cfg.law, rho)
    below = int(np.sum(x0_margin(low, F, rho, cfg.law)[0] >= 0))
    kin = kinetic_bound_violations(frame, F, rho, cfg.law)
    cres = corrector_residual(g, frame.H_field, frame.rhs)
    at = int(np.sum(margin >= 0))
    Hm = np.moveaxis(np.moveaxis(frame.H_field, 0, -1), 0, -1)
    trace = float(np.max(np.abs(np.trace(Hm, axis1=-2, axis2=-1))))
    div_v = float(np.max(np.abs(spectral_divergence(g, frame.v))))
    checks = [
        Check("margin negative at Pi_0", at == 0, f"Pi_0 = {pi0:.6e}, {at} cells >= 0"),
        Check("0.9 Pi_0 violates", below >= 1, f"{below} cells >= 0"),
        Check("kinetic-energy bound", kin == 0, f"{kin} cells violate"),
        Check("corrector identity", cres <= 1e-10, f"max residual {cres:.2e}"),
        Check("corrector trace-free", trace <= 1e-12, f"max |tr H| {trace:.2e}"),
        Check("frame invariants", div_v <= 1e-10 and abs(integrate(g, frame.Psi)) <= 1e-12,
              f"max |div v| {div_v:.2e}, int Psi {integrate(g, frame.Psi):.2e}"),
    ]
    return SubsolutionStudy(frame, margin, pi0, at, below, kin, cres, rho, F, checks)
