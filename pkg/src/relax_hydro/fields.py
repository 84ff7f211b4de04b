"""Periodic grids, discrete calculus, potentials and the nonlocal convolution.

Fields are plain numpy arrays: a scalar field has shape ``grid.shape`` and a
vector field has shape ``(grid.dim, *grid.shape)``.  Convolution kernels are
stored by *offset*: entry ``j`` holds ``K(j dx)`` with circular wrap, so that
``(K*rho)_i = dx**dim * sum_j K[i - j] rho[j]``.
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class PeriodicGrid:
    """Cell-centred uniform grid on the torus ``[-L, L)**dim``."""

    dim: int
    n: int
    L: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 2:
            raise ValueError("need at least two cells per dimension")
        if not self.L > 0:
            raise ValueError("half width L must be positive")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    @property
    def volume(self) -> float:
        return (2.0 * self.L) ** self.dim

    def centers_1d(self) -> np.ndarray:
        return -self.L + (np.arange(self.n) + 0.5) * self.dx

    def coords(self) -> Tuple[np.ndarray, ...]:
        """Cell centres as ``dim`` broadcastable arrays (``ij`` indexing)."""
        x = self.centers_1d()
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def offsets(self) -> Tuple[np.ndarray, ...]:
        """Signed lattice offsets ``j dx`` with ``j`` wrapped into ``[-n/2, n/2)``."""
        j = np.arange(self.n)
        j = np.where(j >= (self.n + 1) // 2, j - self.n, j)
        return tuple(np.meshgrid(*([j * self.dx] * self.dim), indexing="ij"))

    def wavenumbers(self) -> Tuple[np.ndarray, ...]:
        """Angular wavenumbers for ``fftn`` layout, Nyquist entry zeroed."""
        k = np.fft.fftfreq(self.n, d=self.dx) * 2 * np.pi
        if self.n % 2 == 0:
            k[self.n // 2] = 0.0
        return tuple(np.meshgrid(*([k] * self.dim), indexing="ij"))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def vector_zeros(self) -> np.ndarray:
        return np.zeros((self.dim,) + self.shape)


def _check_scalar(grid: PeriodicGrid, f, name="field"):
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise ValueError(f"{name} has shape {f.shape}, grid expects {grid.shape}")
    return f


def integrate(grid: PeriodicGrid, f) -> float:
    return float(grid.cell_volume * np.sum(f))


def gradient(grid: PeriodicGrid, f) -> np.ndarray:
    """Second-order centred gradient with periodic wrap."""
    f = _check_scalar(grid, f)
    return np.stack([(np.roll(f, -1, a) - np.roll(f, 1, a)) / (2 * grid.dx)
                     for a in range(grid.dim)])


def divergence(grid: PeriodicGrid, F) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    if F.shape != (grid.dim,) + grid.shape:
        raise ValueError(f"vector field has shape {F.shape}")
    return sum((np.roll(F[a], -1, a) - np.roll(F[a], 1, a)) / (2 * grid.dx)
               for a in range(grid.dim))


def laplacian(grid: PeriodicGrid, f) -> np.ndarray:
    """``divergence(gradient(f))``: the wide (2 dx) centred stencil."""
    return divergence(grid, gradient(grid, f))


def tensor_divergence(grid: PeriodicGrid, T) -> np.ndarray:
    """Row-wise divergence ``(div T)_i = sum_j d_j T_ij``."""
    return np.stack([divergence(grid, T[i]) for i in range(grid.dim)])


# -- convolution ----------------------------------------------------------------

FFT_CROSSOVER = 64


def convolve_direct(grid: PeriodicGrid, kernel, rho) -> np.ndarray:
    kernel = _check_scalar(grid, kernel, "kernel")
    rho = _check_scalar(grid, rho, "density")
    out = np.zeros(grid.shape)
    for j in itertools.product(range(grid.n), repeat=grid.dim):
        if kernel[j] != 0.0:
            out += kernel[j] * np.roll(rho, j, axis=tuple(range(grid.dim)))
    return grid.cell_volume * out


def convolve_fft(grid: PeriodicGrid, kernel, rho) -> np.ndarray:
    kernel = _check_scalar(grid, kernel, "kernel")
    rho = _check_scalar(grid, rho, "density")
    prod = np.fft.rfftn(kernel) * np.fft.rfftn(rho)
    return grid.cell_volume * np.fft.irfftn(prod, s=grid.shape, axes=tuple(range(grid.dim)))


def convolve(grid: PeriodicGrid, kernel, rho, method: str = "auto") -> np.ndarray:
    """Circular convolution ``dx**dim * sum_j K(x_i - x_j) rho_j``."""
    if method == "auto":
        method = "fft" if grid.n >= FFT_CROSSOVER else "direct"
    if method == "fft":
        return convolve_fft(grid, kernel, rho)
    if method == "direct":
        return convolve_direct(grid, kernel, rho)
    raise ValueError(f"unknown convolution method {method!r}")


# -- potentials -----------------------------------------------------------------

# images beyond this many widths are dropped; exp(-cut^2/2) = 1e-8 of the peak
GAUSSIAN_CUTOFF = float(np.sqrt(2 * np.log(1e8)))


@dataclass(frozen=True)
class PotentialSpec:
    """Analytic or tabulated potential.

    kinds: ``zero``; ``cosine`` (``amplitude * cos(pi k.x / L)``);
    ``gaussian`` (``amplitude * exp(-|x|^2 / 2 width^2)`` summed over the
    periodic images within ``GAUSSIAN_CUTOFF`` (about 6.07) widths); ``tabulated`` (``values`` given
    on the cell centres for a confinement potential, by offset for a
    kernel).
    """

    kind: str = "zero"
    amplitude: float = 1.0
    width: float = 0.2
    modes: Tuple[int, ...] = (1,)
    values: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.kind not in ("zero", "cosine", "gaussian", "tabulated"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "gaussian" and not self.width > 0:
            raise ValueError("gaussian width must be positive")
        if self.kind == "tabulated" and self.values is None:
            raise ValueError("tabulated potential needs values")

    def _evaluate(self, grid: PeriodicGrid, x):
        if self.kind == "zero":
            return np.zeros(grid.shape)
        if self.kind == "cosine":
            modes = tuple(self.modes) + (0,) * (grid.dim - len(self.modes))
            phase = sum(mk * xk for mk, xk in zip(modes, x))
            return self.amplitude * np.cos(np.pi * phase / grid.L)
        if self.kind == "gaussian":
            w = self.width
            cut = GAUSSIAN_CUTOFF * w
            reach = int(np.ceil(cut / (2 * grid.L))) + 1
            out = np.ones(grid.shape)
            for xk in x:
                acc = np.zeros(grid.shape)
                for img in range(-reach, reach + 1):
                    y = xk + 2 * grid.L * img
                    acc += np.where(np.abs(y) <= cut, np.exp(-0.5 * (y / w) ** 2), 0.0)
                out = out * acc
            return self.amplitude * out
        raise AssertionError

    def _tabulated(self, grid):
        vals = np.asarray(self.values, dtype=float)
        if vals.size != np.prod(grid.shape):
            raise ValueError("tabulated values do not match the grid")
        return vals.reshape(grid.shape)

    def cell_values(self, grid: PeriodicGrid) -> np.ndarray:
        """Samples at cell centres (confinement potential use)."""
        if self.kind == "tabulated":
            return self._tabulated(grid)
        return self._evaluate(grid, grid.coords())

    def kernel_values(self, grid: PeriodicGrid) -> np.ndarray:
        """Samples by lattice offset (interaction kernel use); checked even."""
        if self.kind == "tabulated":
            K = self._tabulated(grid)
        else:
            # even by construction; averaging removes image-summation round-off
            K = self._evaluate(grid, grid.offsets())
            K = 0.5 * (K + reflect(K))
        if not np.array_equal(K, reflect(K)):
            raise ValueError("interaction kernel must be even: K(x) = K(-x)")
        return K

    def lower_bound(self, grid: PeriodicGrid) -> float:
        return float(np.min(self.cell_values(grid)))

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "amplitude": self.amplitude, "width": self.width,
             "modes": list(self.modes)}
        return d


def reflect(K) -> np.ndarray:
    """Offset-indexed reflection ``K[-j]``."""
    K = np.asarray(K)
    for a in range(K.ndim):
        K = np.roll(np.flip(K, axis=a), 1, axis=a)
    return K


@functools.lru_cache(maxsize=64)
def cached_kernel(spec: PotentialSpec, grid: PeriodicGrid) -> np.ndarray:
    K = spec.kernel_values(grid)
    K.setflags(write=False)
    return K


@functools.lru_cache(maxsize=64)
def cached_potential(spec: PotentialSpec, grid: PeriodicGrid) -> Tuple[np.ndarray, np.ndarray]:
    """Cell values of a confinement potential and their centred gradient."""
    phi = spec.cell_values(grid)
    grad = gradient(grid, phi)
    phi.setflags(write=False)
    grad.setflags(write=False)
    return phi, grad


def kernel_l1(grid: PeriodicGrid, K) -> float:
    return float(grid.cell_volume * np.sum(np.abs(K)))


# -- snapshot files -------------------------------------------------------------

def snapshot_header(grid: PeriodicGrid, t: float) -> str:
    return f"# grid dim={grid.dim} n={grid.n} L={grid.L!r} t={float(t)!r}"


def write_snapshot(path, grid: PeriodicGrid, values, t: float, fmt: str = "csv") -> Path:
    """Write a scalar field; see README for the byte layout."""
    path = Path(path)
    values = _check_scalar(grid, values)
    header = snapshot_header(grid, t)
    if fmt == "csv":
        body = "\n".join(repr(float(v)) for v in values.ravel())
        path.write_text(header + "\n" + body + "\n")
    elif fmt == "bin":
        with open(path, "wb") as fh:
            fh.write((header + "\n").encode("ascii"))
            fh.write(values.astype("<f8").tobytes(order="C"))
    else:
        raise ValueError(f"unknown snapshot format {fmt!r}")
    return path


def _parse_header(line: str):
    if not line.startswith("# grid "):
        raise ValueError("missing snapshot header")
    kv = dict(tok.split("=", 1) for tok in line[len("# grid "):].split())
    grid = PeriodicGrid(int(kv["dim"]), int(kv["n"]), float(kv["L"]))
    return grid, float(kv["t"])


def read_snapshot(path, fmt: Optional[str] = None):
    """Return ``(grid, values, t)``; format inferred from the suffix if not given."""
    path = Path(path)
    fmt = fmt or ("bin" if path.suffix == ".bin" else "csv")
    raw = path.read_bytes()
    nl = raw.index(b"\n")
    grid, t = _parse_header(raw[:nl].decode("ascii"))
    rest = raw[nl + 1:]
    if fmt == "bin":
        vals = np.frombuffer(rest, dtype="<f8").copy()
    else:
        vals = np.array([float(s) for s in rest.decode("ascii").split()])
    if vals.size != np.prod(grid.shape):
        raise ValueError(f"{path}: expected {np.prod(grid.shape)} values, got {vals.size}")
    return grid, vals.reshape(grid.shape), t
