import numpy as np
import pytest

from relax_hydro.config import default_config
from relax_hydro.entropy import DomainError
from relax_hydro.fields import PeriodicGrid, PotentialSpec, integrate
from relax_hydro.scenarios import decaying_mode, subsolution_study, trace_free_strain
from relax_hydro.subsolution import (algebraic_inequality_margin, build_frame, corrector_residual,
                                     decompose_momentum, inverse_laplacian, kinetic_bound_violations,
                                     lambda_max, mean_force, recompose, solve_corrector,
                                     solve_V_ode, spectral_divergence, spectral_gradient,
                                     with_gauge, x0_margin)

from oracles import lambda_max_charpoly


def random_trace_free(rng, d, batch=()):
    H = rng.normal(size=batch + (d, d))
    H = 0.5 * (H + np.swapaxes(H, -1, -2))
    tr = np.trace(H, axis1=-2, axis2=-1)
    return H - tr[..., None, None] / d * np.eye(d)


# -- decomposition ------------------------------------------------------------------

def test_constant_momentum():
    g = PeriodicGrid(2, 16, 1.0)
    mom = np.stack([np.full(g.shape, 0.3), np.full(g.shape, -1.2)])
    v, V, Psi = decompose_momentum(g, mom)
    assert np.max(np.abs(v)) <= 1e-15 and np.max(np.abs(Psi)) <= 1e-15
    assert np.allclose(V, [0.3, -1.2], rtol=1e-15)


def test_gradient_momentum_recovers_potential():
    g = PeriodicGrid(2, 32, 1.5)
    x, y = g.coords()
    a, b = np.pi / g.L, 2 * np.pi / g.L
    psi = np.sin(a * x) * np.cos(b * y)
    mom = np.stack([a * np.cos(a * x) * np.cos(b * y), -b * np.sin(a * x) * np.sin(b * y)])
    v, V, Psi = decompose_momentum(g, mom)
    assert np.max(np.abs(v)) <= 1e-10 and np.max(np.abs(V)) <= 1e-10
    assert np.max(np.abs(Psi - psi)) <= 1e-10


def test_rotated_gradient_is_solenoidal_part():
    g = PeriodicGrid(2, 32, 1.0)
    x, y = g.coords()
    a = np.pi / g.L
    # rotated gradient of sin(a x) sin(a y)
    field = np.stack([-a * np.sin(a * x) * np.cos(a * y), a * np.cos(a * x) * np.sin(a * y)])
    v, V, Psi = decompose_momentum(g, field)
    assert np.max(np.abs(v - field)) <= 1e-10
    assert np.max(np.abs(V)) <= 1e-10 and np.max(np.abs(Psi)) <= 1e-10


@pytest.mark.parametrize("dim,n", [(2, 16), (3, 8)])
def test_decomposition_invariants_and_idempotence(dim, n):
    g = PeriodicGrid(dim, n, 1.0)
    rng = np.random.default_rng(dim)
    mom = rng.normal(size=(dim,) + g.shape)
    v, V, Psi = decompose_momentum(g, mom)
    back = recompose(g, v, V, Psi)
    assert np.max(np.abs(back - mom)) <= 1e-10
    assert np.max(np.abs(spectral_divergence(g, v))) <= 1e-10
    assert all(abs(integrate(g, v[a])) <= 1e-10 for a in range(dim))
    assert abs(integrate(g, Psi)) <= 1e-12
    v2, V2, Psi2 = decompose_momentum(g, back)
    assert np.max(np.abs(v2 - v)) <= 1e-12
    assert np.max(np.abs(V2 - V)) <= 1e-12
    assert np.max(np.abs(Psi2 - Psi)) <= 1e-12


def test_inverse_laplacian_needs_mean_zero():
    g = PeriodicGrid(2, 8)
    with pytest.raises(ValueError):
        inverse_laplacian(g, np.ones(g.shape))


# -- mean-momentum ODE --------------------------------------------------------------

def test_V_ode_free_decay():
    c = np.array([1.0, -2.0])
    dt, n = 0.01, 300
    V = solve_V_ode(np.zeros((n, 2)), c, dt)
    t = dt * np.arange(n + 1)
    assert np.max(np.abs(V - c * np.exp(-t)[:, None])) <= 1e-12


def test_V_ode_fixed_point_and_relaxation():
    G = np.array([0.4, 0.1])
    V = solve_V_ode(np.tile(G, (100, 1)), G, 0.05)
    assert np.all(V == G)
    V0 = np.array([-1.0, 2.0])
    dt, n = 0.1, 200
    V = solve_V_ode(np.tile(G, (n, 1)), V0, dt)
    t = dt * np.arange(n + 1)
    assert np.max(np.abs(V - (G + (V0 - G) * np.exp(-t)[:, None]))) <= 1e-12
    assert np.all(np.abs(V[-1] - G) <= np.abs(V0 - G) * np.exp(-t[-1]) * (1 + 1e-9))


def test_mean_force_vanishes_for_uniform_density():
    g = PeriodicGrid(2, 16, 1.0)
    f = mean_force(g, np.ones(g.shape), PotentialSpec("gaussian", -1, 0.2),
                   PotentialSpec("cosine", 0.1), 0.05)
    assert np.max(np.abs(f)) <= 1e-15


# -- eigenvalues --------------------------------------------------------------------

def test_lambda_max_examples():
    assert lambda_max(np.eye(2)) == 1.0
    assert lambda_max(np.diag([3.0, -1.0])) == 3.0
    assert lambda_max(np.array([[1.0, 2.0], [2.0, 4.0]])) == pytest.approx(5.0, rel=1e-15)


def test_lambda_max_rejects_asymmetric():
    with pytest.raises(ValueError):
        lambda_max(np.array([[1.0, 1.0], [0.0, 1.0]]))


@pytest.mark.parametrize("d", [2, 3])
def test_lambda_max_against_characteristic_polynomial(d):
    rng = np.random.default_rng(d)
    A = rng.normal(size=(200, d, d))
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    got = lambda_max(A)
    for a, lam in zip(A, got):
        ref = lambda_max_charpoly(a)
        assert abs(lam - ref) <= 1e-12 * max(abs(ref), np.max(np.abs(a)))


# -- algebraic inequality -----------------------------------------------------------

def test_margin_examples():
    assert algebraic_inequality_margin([1.0, 0.0], 1.0, np.zeros((2, 2))) == pytest.approx(0.5)
    assert algebraic_inequality_margin([0.0, 0.0], 2.0, np.zeros((2, 2))) == 0.0


def test_margin_with_zero_corrector_closed_form():
    rng = np.random.default_rng(7)
    for d in (2, 3):
        M = rng.normal(size=(50, d))
        r = rng.uniform(0.1, 3, 50)
        got = algebraic_inequality_margin(M, r, np.zeros((50, d, d)))
        ref = 0.5 * (d - 1) * np.sum(M**2, axis=-1) / r
        assert np.allclose(got, ref, rtol=1e-13)


@pytest.mark.parametrize("d", [2, 3])
def test_margin_nonnegative_random_draws(d):
    rng = np.random.default_rng(100 + d)
    n = 100_000
    M = rng.normal(size=(n, d)) * rng.uniform(0, 5, (n, 1))
    r = rng.uniform(1e-3, 10, n)
    H = random_trace_free(rng, d, (n,)) * rng.uniform(0, 5, (n, 1, 1))
    assert np.min(algebraic_inequality_margin(M, r, H)) >= -1e-12


def test_margin_domain_errors():
    with pytest.raises(DomainError):
        algebraic_inequality_margin([1.0, 0.0], 0.0, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        algebraic_inequality_margin([1.0, 0.0], 1.0, np.eye(2))


# -- corrector and frame ------------------------------------------------------------

@pytest.mark.parametrize("dim,n", [(2, 32), (3, 8)])
def test_corrector_identity(dim, n):
    g = PeriodicGrid(dim, n, 1.0)
    rng = np.random.default_rng(dim)
    f = rng.normal(size=(dim,) + g.shape)
    f -= f.mean(axis=tuple(range(1, dim + 1)), keepdims=True)
    # drop the Nyquist content, which spectral derivatives cannot see
    fh = np.fft.fftn(f, axes=tuple(range(1, dim + 1)))
    for ax in range(1, dim + 1):
        idx = [slice(None)] * (dim + 1)
        idx[ax] = n // 2
        fh[tuple(idx)] = 0
    f = np.real(np.fft.ifftn(fh, axes=tuple(range(1, dim + 1))))
    _, H = solve_corrector(g, f)
    assert corrector_residual(g, H, f) <= 1e-10
    assert np.max(np.abs(H - np.swapaxes(H, 0, 1))) == 0
    assert np.max(np.abs(sum(H[i, i] for i in range(dim)))) <= 1e-12


@pytest.fixture(scope="module")
def frame_inputs():
    cfg = default_config("subsolution-2d")
    g = cfg.grid
    rho, rho_t, rho_tt = decaying_mode(cfg, 0.2)
    x, y = g.coords()
    a = np.pi / g.L
    v = 0.2 * np.stack([-a * np.sin(a * x) * np.cos(a * y), a * np.cos(a * x) * np.sin(a * y)])
    frame = build_frame(g, rho, rho_t, rho_tt, v, np.array([0.01, -0.02]), cfg.law, cfg.K,
                        cfg.Phi, cfg.C_k, 0.0)
    return cfg, frame, rho, rho_t


def test_frame_invariants(frame_inputs):
    cfg, frame, rho, rho_t = frame_inputs
    g = cfg.grid
    assert abs(integrate(g, frame.Psi)) <= 1e-12
    assert np.max(np.abs(spectral_divergence(g, frame.v))) <= 1e-10
    # the heat-type constraint rho_t + lap Psi = 0
    lap_psi = spectral_divergence(g, spectral_gradient(g, frame.Psi))
    assert np.max(np.abs(lap_psi + rho_t)) <= 1e-10
    H = frame.H_field
    assert np.array_equal(H, np.swapaxes(H, 0, 1))
    assert np.max(np.abs(H[0, 0] + H[1, 1])) <= 1e-12


def test_margin_negative_for_huge_gauge(frame_inputs):
    cfg, frame, rho, _ = frame_inputs
    big = with_gauge(frame, 1e6, cfg.law, rho)
    margin, _ = x0_margin(big, np.zeros((2, 2) + cfg.grid.shape), rho, cfg.law)
    assert np.all(margin < 0)


def test_gauge_below_pi0_fails_somewhere(frame_inputs):
    cfg, frame, rho, _ = frame_inputs
    F = trace_free_strain(cfg.grid, 0.1)
    _, pi0 = x0_margin(frame, F, rho, cfg.law)
    assert pi0 > 0
    at = with_gauge(frame, pi0, cfg.law, rho)
    assert np.all(x0_margin(at, F, rho, cfg.law)[0] < 0)
    low = with_gauge(frame, 0.999 * pi0, cfg.law, rho)
    assert np.any(x0_margin(low, F, rho, cfg.law)[0] >= 0)


@pytest.mark.parametrize("scale", [1.0, 1.5, 3.0])
def test_negative_margin_implies_kinetic_bound(frame_inputs, scale):
    cfg, frame, rho, _ = frame_inputs
    F = trace_free_strain(cfg.grid, 0.1)
    _, pi0 = x0_margin(frame, F, rho, cfg.law)
    fr = with_gauge(frame, scale * pi0, cfg.law, rho)
    margin, _ = x0_margin(fr, F, rho, cfg.law)
    M = fr.momentum
    kin = 0.5 * np.sum(M**2, axis=0) / rho
    neg = margin < 0
    assert np.all(kin[neg] < fr.e_gauge[neg])
    assert kinetic_bound_violations(fr, F, rho, cfg.law) == 0


def test_subsolution_study_checks():
    st = subsolution_study(default_config("subsolution-2d"))
    assert all(c.passed for c in st.checks), [c.line() for c in st.checks]
    assert np.max(np.abs(st.frame.V)) > 0
