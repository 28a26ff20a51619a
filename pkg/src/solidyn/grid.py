"""Periodic spectral discretization of R^N (N = 1 or 2).

The continuum problem lives on R^N with exponentially decaying profiles;
here it is truncated to the torus [-L/2, L/2)^N and all derivatives,
integrals and convolutions are spectral.  Integrals use the rectangle rule
h^N * sum, which is spectrally accurate for smooth periodic integrands.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as _fft

from .errors import GridMismatchError


def fftn(a: np.ndarray, dim: int) -> np.ndarray:
    """FFT over the trailing `dim` axes (leading axes broadcast)."""
    return _fft.fftn(a, axes=tuple(range(-dim, 0)))


def ifftn(a: np.ndarray, dim: int) -> np.ndarray:
    return _fft.ifftn(a, axes=tuple(range(-dim, 0)))


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform periodic grid on [-L/2, L/2)^N with FFT wavenumbers.

    Attributes:
        dim: spatial dimension N, restricted to 1 or 2 at desk scale
            (the data model itself does not hard-code N).
        extent: box size L per axis.
        npts: points per axis n (even).
    """

    dim: int
    extent: float
    npts: int

    def __post_init__(self):
        if self.dim < 1:
            raise GridMismatchError(f"dim must be >= 1, got {self.dim}")
        if self.npts < 4 or self.npts % 2 != 0:
            raise GridMismatchError(f"npts must be even and >= 4, got {self.npts}")
        if not self.extent > 0:
            raise GridMismatchError(f"extent must be positive, got {self.extent}")
        # memory guard: refuse grids that obviously cannot fit desk scale
        if self.npts ** self.dim > 64_000_000:
            raise GridMismatchError("grid exceeds the configured memory budget")

    @property
    def spacing(self) -> float:
        return self.extent / self.npts

    @property
    def shape(self) -> tuple:
        return (self.npts,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def axis_coords(self) -> np.ndarray:
        """1D coordinate array -L/2 + h*k, shared by every axis."""
        return -0.5 * self.extent + self.spacing * np.arange(self.npts)

    @property
    def axis_wavenumbers(self) -> np.ndarray:
        """Angular frequencies 2*pi*k/L in FFT ordering (0 first)."""
        return 2.0 * np.pi * _fft.fftfreq(self.npts, d=self.spacing)

    def coords(self) -> np.ndarray:
        """Stacked meshgrid of coordinates, shape (N, n, ..., n)."""
        axes = [self.axis_coords] * self.dim
        return np.array(np.meshgrid(*axes, indexing="ij"))

    def wavenumbers(self) -> np.ndarray:
        """Stacked meshgrid of wavenumbers, shape (N, n, ..., n)."""
        axes = [self.axis_wavenumbers] * self.dim
        return np.array(np.meshgrid(*axes, indexing="ij"))

    def k_squared(self) -> np.ndarray:
        k = self.wavenumbers()
        return np.sum(k * k, axis=0)

    def same_as(self, other: "SpectralGrid") -> bool:
        return (self.dim == other.dim and self.npts == other.npts
                and abs(self.extent - other.extent) <= 1e-12 * self.extent)

    def require_same(self, other: "SpectralGrid"):
        if not self.same_as(other):
            raise GridMismatchError(f"grid mismatch: {self} vs {other}")


@dataclass
class VectorField:
    """m-component complex (or real) field sampled on a SpectralGrid.

    data has shape (m, n, ..., n); component j is data[j].
    """

    grid: SpectralGrid
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != self.grid.dim + 1:
            raise GridMismatchError(
                f"field must have {self.grid.dim + 1} axes (m plus grid), "
                f"got shape {self.data.shape}")
        if self.data.shape[1:] != self.grid.shape:
            raise GridMismatchError(
                f"field shape {self.data.shape[1:]} != grid shape {self.grid.shape}")
        if self.data.shape[0] < 1:
            raise GridMismatchError("field needs at least one component")

    @property
    def m(self) -> int:
        return self.data.shape[0]

    def component(self, j: int) -> np.ndarray:
        return self.data[j]

    def copy(self) -> "VectorField":
        return VectorField(self.grid, self.data.copy())

    @classmethod
    def from_components(cls, grid: SpectralGrid, *components) -> "VectorField":
        return cls(grid, np.stack([np.asarray(c) for c in components]))


# ---------------------------------------------------------------------------
# array-level spectral operations (leading axes broadcast over the FFT axes)
# ---------------------------------------------------------------------------

def spectral_gradient_arr(grid: SpectralGrid, arr: np.ndarray) -> np.ndarray:
    """d/dx_a of arr along every axis a; output gains an axis of length N
    just before the grid axes: (..., *shape) -> (..., N, *shape)."""
    ah = fftn(arr, grid.dim)
    karr = grid.wavenumbers()
    # broadcast (..., 1, *shape) * (N, *shape) -> (..., N, *shape)
    gh = np.expand_dims(ah, axis=-grid.dim - 1) * (1j * karr)
    return ifftn(gh, grid.dim)


def laplacian_arr(grid: SpectralGrid, arr: np.ndarray) -> np.ndarray:
    ah = fftn(arr, grid.dim)
    return ifftn(-grid.k_squared() * ah, grid.dim)


def integrate(grid: SpectralGrid, arr: np.ndarray):
    """h^N * sum over the grid axes; leading axes survive."""
    return arr.sum(axis=tuple(range(-grid.dim, 0))) * grid.cell_volume


def l2_inner_arr(grid: SpectralGrid, f: np.ndarray, g: np.ndarray):
    """h^N * sum conj(f) g over grid axes and any leading axes."""
    return np.sum(np.conj(f) * g) * grid.cell_volume


def l2_norm_sq_arr(grid: SpectralGrid, f: np.ndarray) -> float:
    return float(np.sum(np.abs(f) ** 2)) * grid.cell_volume


def fourier_shift_arr(grid: SpectralGrid, arr: np.ndarray, shift) -> np.ndarray:
    """Translate arr by `shift`: result(x) = arr(x - shift), exact for
    band-limited fields (shift need not be on the grid)."""
    shift = np.atleast_1d(np.asarray(shift, dtype=float))
    ah = fftn(arr, grid.dim)
    karr = grid.wavenumbers()
    phase = np.exp(-1j * np.tensordot(shift, karr, axes=(0, 0)))
    out = ifftn(ah * phase, grid.dim)
    return out


# ---------------------------------------------------------------------------
# VectorField-level operations
# ---------------------------------------------------------------------------

def gradient(f: VectorField) -> np.ndarray:
    """Spectral derivative of each component along each axis,
    shape (m, N, *shape). Exact for band-limited inputs."""
    return spectral_gradient_arr(f.grid, f.data)


def l2_inner(f: VectorField, g: VectorField) -> complex:
    """h^N sum of conj(f).g over grid and components; conjugate-symmetric."""
    f.grid.require_same(g.grid)
    if f.m != g.m:
        raise GridMismatchError(f"component mismatch: {f.m} vs {g.m}")
    return complex(l2_inner_arr(f.grid, f.data, g.data))


def masses(f: VectorField) -> np.ndarray:
    """Per-component L2 masses ||f_j||^2."""
    return integrate(f.grid, np.abs(f.data) ** 2).real


def h1_norm_sq(f: VectorField) -> float:
    """||grad f||_L2^2 + ||f||_L2^2 summed over components."""
    g = gradient(f)
    return (l2_norm_sq_arr(f.grid, g) + l2_norm_sq_arr(f.grid, f.data))


def h1_norm_sq_arr(grid: SpectralGrid, arr: np.ndarray) -> float:
    g = spectral_gradient_arr(grid, arr)
    return l2_norm_sq_arr(grid, g) + l2_norm_sq_arr(grid, arr)


def convolve_periodic(a: np.ndarray, b: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    """h^N-scaled circular convolution (a*b)(x) = h^N sum_y a(x-y) b(y).

    Both inputs are real scalar fields sampled on the centered grid; the
    kernel a is read at periodically wrapped displacements, so its origin
    sample sits at the grid point x=0 (index n/2 per axis).
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != grid.shape or b.shape != grid.shape:
        raise GridMismatchError(
            f"convolution operands {a.shape}, {b.shape} != grid {grid.shape}")
    if np.iscomplexobj(a) or np.iscomplexobj(b):
        raise GridMismatchError("convolve_periodic expects real fields")
    ah = fftn(_fft.ifftshift(a), grid.dim)
    bh = fftn(b, grid.dim)
    out = ifftn(ah * bh, grid.dim).real
    return out * grid.cell_volume


def parseval_l2_sq(grid: SpectralGrid, arr: np.ndarray) -> float:
    """||arr||_L2^2 evaluated on the Fourier side (Parseval check)."""
    ah = fftn(arr, grid.dim)
    npts_total = grid.npts ** grid.dim
    return float(np.sum(np.abs(ah) ** 2)) * grid.cell_volume / npts_total
