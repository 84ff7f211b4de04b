import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from relax_hydro.fields import (PeriodicGrid, PotentialSpec, cached_kernel, convolve,
                                convolve_direct, convolve_fft, divergence, gradient, integrate,
                                kernel_l1, laplacian, read_snapshot, reflect, write_snapshot)

from oracles import convolve_loops


def test_grid_geometry():
    g = PeriodicGrid(2, 8, 1.5)
    assert g.dx * g.n == 2 * g.L
    assert np.allclose(g.centers_1d(), -1.5 + (np.arange(8) + 0.5) * g.dx)
    assert g.volume == 9.0


# -- convolution --------------------------------------------------------------------

def test_convolve_constant_kernel():
    g = PeriodicGrid(2, 8, 1.0)
    rho = np.random.default_rng(0).uniform(0.5, 2, g.shape)
    out = convolve(g, np.full(g.shape, 3.0), rho)
    assert np.allclose(out, 3.0 * integrate(g, rho), rtol=1e-13)


def test_convolve_delta_kernel():
    g = PeriodicGrid(1, 16, 2.0)
    K = np.zeros(g.shape)
    K[0] = 1 / g.dx
    rho = np.random.default_rng(1).normal(size=g.shape)
    assert np.allclose(convolve(g, K, rho), rho, atol=1e-14)


def test_convolve_hand_example():
    g = PeriodicGrid(1, 4, 2.0)
    out = convolve_direct(g, np.array([0.0, 1, 0, 0]), np.array([1.0, 2, 3, 4]))
    assert np.array_equal(out, [4.0, 1, 2, 3])
    assert np.allclose(convolve_fft(g, np.array([0.0, 1, 0, 0]), np.array([1.0, 2, 3, 4])),
                       [4, 1, 2, 3], atol=1e-14)


@pytest.mark.parametrize("dim,n", [(1, 6), (1, 9), (2, 4), (2, 5)])
def test_convolve_against_loops(dim, n):
    g = PeriodicGrid(dim, n, 0.9)
    rng = np.random.default_rng(n)
    K, rho = rng.normal(size=g.shape), rng.normal(size=g.shape)
    ref = convolve_loops(K, rho, g.dx)
    assert np.allclose(convolve_direct(g, K, rho), ref, rtol=1e-12, atol=1e-13)
    assert np.allclose(convolve_fft(g, K, rho), ref, rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("dim,n", [(1, 256), (2, 32), (2, 64)])
def test_fft_matches_direct(dim, n):
    g = PeriodicGrid(dim, n, 1.0)
    rng = np.random.default_rng(2)
    K = cached_kernel(PotentialSpec("gaussian", -1.0, 0.2), g)
    rho = rng.uniform(0.1, 2, g.shape)
    a, b = convolve_direct(g, K, rho), convolve_fft(g, K, rho)
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))


def test_convolve_grid_mismatch():
    g = PeriodicGrid(1, 8)
    with pytest.raises(ValueError):
        convolve(g, np.zeros(8), np.zeros(9))


def test_convolution_symmetry_pairing():
    g = PeriodicGrid(2, 32, 1.0)
    K = cached_kernel(PotentialSpec("gaussian", 1.0, 0.3), g)
    rng = np.random.default_rng(3)
    rho, sig = rng.uniform(size=g.shape), rng.uniform(size=g.shape)
    a = integrate(g, convolve(g, K, rho) * sig)
    b = integrate(g, convolve(g, K, sig) * rho)
    assert a == pytest.approx(b, rel=1e-12)


def test_kernels_are_even():
    g = PeriodicGrid(2, 16, 1.0)
    for spec in (PotentialSpec("gaussian", 1, 0.7), PotentialSpec("cosine", 1, modes=(1, 2)),
                 PotentialSpec("zero")):
        K = cached_kernel(spec, g)
        assert np.array_equal(K, reflect(K))


def test_tabulated_kernel_must_be_even():
    g = PeriodicGrid(1, 4, 2.0)
    with pytest.raises(ValueError):
        PotentialSpec("tabulated", values=(0.0, 1.0, 0.0, 0.0)).kernel_values(g)
    K = PotentialSpec("tabulated", values=(2.0, 1.0, 0.0, 1.0)).kernel_values(g)
    assert np.array_equal(K, [2, 1, 0, 1])


def test_wrapped_gaussian_tail_truncation():
    # width comparable to the box: images out to six widths must be summed
    g = PeriodicGrid(1, 64, 1.0)
    w = 0.8
    K = PotentialSpec("gaussian", 1.0, w).kernel_values(g)
    x = g.offsets()[0]
    ref = sum(np.exp(-0.5 * ((x + 2 * img) / w) ** 2) for img in range(-10, 11))
    assert np.max(np.abs(K - ref)) <= 1e-8


def test_potential_lower_bound():
    g = PeriodicGrid(1, 32, 1.0)
    assert PotentialSpec("cosine", 0.1).lower_bound(g) >= -0.1


# -- calculus -----------------------------------------------------------------------

def test_gradient_of_constant():
    g = PeriodicGrid(2, 8)
    assert np.all(gradient(g, np.full(g.shape, 4.2)) == 0)


def test_gradient_second_order():
    errs = []
    for n in (32, 64, 128):
        g = PeriodicGrid(1, n, 1.0)
        x = g.coords()[0]
        d = gradient(g, np.sin(np.pi * x / g.L))[0]
        errs.append(np.max(np.abs(d - np.pi / g.L * np.cos(np.pi * x / g.L))))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders >= 1.9)


def test_divergence_of_gradient_telescopes():
    g = PeriodicGrid(2, 16, 1.0)
    f = np.random.default_rng(4).normal(size=g.shape)
    assert abs(integrate(g, divergence(g, gradient(g, f)))) <= 1e-12
    assert np.allclose(laplacian(g, f), divergence(g, gradient(g, f)))


def test_laplacian_is_wide_three_point_stencil():
    g = PeriodicGrid(1, 16, 1.0)
    f = np.random.default_rng(5).normal(size=g.shape)
    ref = (np.roll(f, -2) - 2 * f + np.roll(f, 2)) / (2 * g.dx) ** 2
    assert np.allclose(laplacian(g, f), ref, atol=1e-12)


@settings(max_examples=40)
@given(arrays(float, (2, 8, 8), elements=st.floats(-5, 5)),
       arrays(float, (8, 8), elements=st.floats(-5, 5)))
def test_skew_adjoint(F, f):
    g = PeriodicGrid(2, 8, 1.0)
    lhs = integrate(g, f * divergence(g, F))
    rhs = -integrate(g, np.sum(gradient(g, f) * F, axis=0))
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_integrate_examples():
    for n in (4, 16):
        assert integrate(PeriodicGrid(2, n, 1.0), np.ones((n, n))) == pytest.approx(4.0)
    g = PeriodicGrid(1, 64, 1.0)
    assert abs(integrate(g, np.sin(np.pi * g.coords()[0] / g.L))) <= 1e-12
    assert integrate(PeriodicGrid(1, 4, 1.0), np.array([1.0, 2, 3, 4])) == 5.0


def test_kernel_l1():
    g = PeriodicGrid(1, 4, 2.0)
    assert kernel_l1(g, np.array([1.0, -2, 0, -2])) == 5.0


# -- snapshots ----------------------------------------------------------------------

@pytest.mark.parametrize("fmt", ["csv", "bin"])
def test_snapshot_roundtrip(tmp_path, fmt):
    g = PeriodicGrid(2, 4, 0.1)
    vals = np.random.default_rng(6).normal(size=g.shape)
    p = write_snapshot(tmp_path / f"s.{fmt}", g, vals, 0.3, fmt)
    g2, v2, t = read_snapshot(p)
    assert g2 == g and t == 0.3 and np.array_equal(v2, vals)


def test_snapshot_byte_layout(tmp_path):
    g = PeriodicGrid(1, 2, 1.0)
    p = write_snapshot(tmp_path / "a.csv", g, np.array([0.5, 0.1]), 0.0, "csv")
    assert p.read_bytes() == b"# grid dim=1 n=2 L=1.0 t=0.0\n0.5\n0.1\n"
    p = write_snapshot(tmp_path / "a.bin", g, np.array([0.5, 0.1]), 0.0, "bin")
    raw = p.read_bytes()
    assert raw[:29] == b"# grid dim=1 n=2 L=1.0 t=0.0\n"
    assert raw[29:] == np.array([0.5, 0.1], "<f8").tobytes()
