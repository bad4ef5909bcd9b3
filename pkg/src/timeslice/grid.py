"""Uniform box grids, Fourier conventions, norms and semiclassical dilations.

Conventions used everywhere in the package
------------------------------------------
* Positions ``x_j = -L + j*dx`` for ``j = 0..n-1`` with ``dx = 2L/n``; the
  right edge ``+L`` is not a node (periodic box).
* The forward transform is ``fhat(xi) = sum_j f(x_j) exp(-i x_j xi) dx`` and the
  inverse carries ``(2 pi)^-d``.
* Frequencies are stored in ascending order ``xi_k = (k - n/2) dxi`` with
  ``dxi = pi/L``. The Nyquist bucket ``-pi/dx`` belongs to the negative side.
* Reductions use numpy's pairwise summation over a contiguous axis, which has a
  fixed order for a given array shape, so norms are reproducible run to run.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np

from .exceptions import BoundaryMassError

#: Largest admissible fraction of |f|^2 in the outer shell of the box.
BOUNDARY_MASS_TOL = 1e-10
#: Relative thickness of the outer shell used by the boundary-mass diagnostic.
BOUNDARY_SHELL = 0.05


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on the box ``[-L, L)^d``.

    Parameters
    ----------
    n : int
        Points per axis, a power of two.
    half_width : float
        Box half-width ``L``.
    dim : int
        Spatial dimension, 1 or 2.
    """

    n: int
    half_width: float
    dim: int = 1

    def __post_init__(self):
        n = int(self.n)
        if n < 2 or n & (n - 1):
            raise ValueError(f"n must be a power of two, got {self.n}")
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "half_width", float(self.half_width))

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def dxi(self) -> float:
        return np.pi / self.half_width

    @property
    def cell(self) -> float:
        """Volume element ``dx^d``."""
        return self.dx**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        """Node positions along one axis."""
        return -self.half_width + self.dx * np.arange(self.n)

    @cached_property
    def freq_axis(self) -> np.ndarray:
        """Ascending frequencies along one axis (Nyquist first)."""
        return self.dxi * (np.arange(self.n) - self.n // 2)

    @cached_property
    def fft_freqs(self) -> np.ndarray:
        """Frequencies in numpy FFT order along one axis."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, self.dx)

    def coords(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays broadcast to :attr:`shape` (``ij`` indexing)."""
        if self.dim == 1:
            return (self.axis,)
        return tuple(np.meshgrid(self.axis, self.axis, indexing="ij"))

    def freq_sq(self, centered: bool = False) -> np.ndarray:
        """``|xi|^2`` on the frequency grid, in FFT or ascending order."""
        k = self.freq_axis if centered else self.fft_freqs
        if self.dim == 1:
            return k**2
        return k[:, None] ** 2 + k[None, :] ** 2

    def shell_mask(self, fraction: float = BOUNDARY_SHELL) -> np.ndarray:
        """Boolean mask of the outer shell ``max_i |x_i| >= (1 - fraction) L``."""
        edge = (1.0 - fraction) * self.half_width
        out = np.abs(self.axis) >= edge
        if self.dim == 1:
            return out
        return out[:, None] | out[None, :]

    def same_as(self, other: "GridSpec") -> bool:
        return (self.n, self.half_width, self.dim) == (other.n, other.half_width, other.dim)


@dataclass(frozen=True)
class WaveFunction:
    """Complex samples on a :class:`GridSpec` together with ``hbar``.

    Parameters
    ----------
    grid : GridSpec
    values : array_like
        Samples of shape ``grid.shape`` (a flat array of length ``n**d`` is
        reshaped).
    hbar : float
        Semiclassical parameter in ``(0, 1]``.
    domain : {"position", "frequency"}
        Frequency-domain values are stored on the ascending frequency grid.
    """

    grid: GridSpec
    values: np.ndarray
    hbar: float = 1.0
    domain: Literal["position", "frequency"] = "position"

    def __post_init__(self):
        v = np.array(self.values, dtype=np.complex128)
        if v.size != self.grid.n**self.grid.dim:
            raise ValueError(
                f"expected {self.grid.n ** self.grid.dim} samples, got {v.size}"
            )
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("wavefunction values must be finite")
        if not 0.0 < self.hbar <= 1.0:
            raise ValueError(f"hbar must lie in (0, 1], got {self.hbar}")
        if self.domain not in ("position", "frequency"):
            raise ValueError(f"unknown domain {self.domain!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: GridSpec, func, hbar: float = 1.0) -> "WaveFunction":
        """Sample ``func(*coords)`` on the grid."""
        return cls(grid, func(*grid.coords()), hbar)

    def with_values(self, values: np.ndarray, domain: str | None = None) -> "WaveFunction":
        return WaveFunction(self.grid, values, self.hbar, domain or self.domain)

    def boundary_mass(self) -> float:
        """Fraction of ``|f|^2`` in the outer 5% shell of the box."""
        return boundary_mass(self.values, self.grid)

    def check_boundary(self, what: str = "wavefunction", tol: float = BOUNDARY_MASS_TOL):
        """Raise :class:`BoundaryMassError` if the boundary shell holds too much mass."""
        mass = self.boundary_mass()
        if mass > tol:
            raise BoundaryMassError(
                f"{what}: boundary mass {mass:.3e} exceeds {tol:.0e}; enlarge the box",
                mass=mass,
            )
        return mass

    def norm(self, p: float = 2.0) -> float:
        return lp_norm(self, p)

    def to_csv(self, path) -> None:
        """Write ``index, x, re, im`` rows (``x1, x2`` in two dimensions)."""
        coords = [c.ravel() for c in self.grid.coords()]
        vals = self.values.ravel()
        header = ["index", "x", "re", "im"] if self.grid.dim == 1 else ["index", "x1", "x2", "re", "im"]
        if self.domain == "frequency":
            header = [{"x": "xi", "x1": "xi1", "x2": "xi2"}.get(h, h) for h in header]
            axis = self.grid.freq_axis
            coords = [axis] if self.grid.dim == 1 else [
                c.ravel() for c in np.meshgrid(axis, axis, indexing="ij")
            ]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(vals.size):
                row = [i] + [fmt(c[i]) for c in coords] + [fmt(vals[i].real), fmt(vals[i].imag)]
                w.writerow(row)


def fmt(v: float) -> str:
    """Round-trip float formatting used by every CSV writer."""
    return format(float(v), ".17g")


def _spatial_axes(values: np.ndarray, grid: GridSpec) -> tuple[int, ...]:
    return tuple(range(values.ndim - grid.dim, values.ndim))


def boundary_mass(values: np.ndarray, grid: GridSpec) -> float:
    """Boundary-shell mass fraction; for batches the worst member is returned."""
    dens = np.abs(values) ** 2
    axes = _spatial_axes(values, grid)
    total = dens.sum(axis=axes)
    shell = np.where(grid.shell_mask(), dens, 0.0).sum(axis=axes)
    frac = np.where(total > 0, shell / np.where(total > 0, total, 1.0), 0.0)
    return float(np.max(frac))


def fourier_transform(f: WaveFunction, direction: Literal["forward", "inverse"] = "forward") -> WaveFunction:
    """Scaled FFT realizing ``fhat(xi) = int exp(-i x xi) f(x) dx``.

    Parameters
    ----------
    f : WaveFunction
        Position-domain samples for ``forward``, frequency-domain for ``inverse``.
    direction : {"forward", "inverse"}

    Returns
    -------
    WaveFunction
    """
    if direction == "forward":
        if f.domain != "position":
            raise ValueError("forward transform expects position-domain data")
        return f.with_values(forward_values(f.values, f.grid), "frequency")
    if direction == "inverse":
        if f.domain != "frequency":
            raise ValueError("inverse transform expects frequency-domain data")
        return f.with_values(inverse_values(f.values, f.grid), "position")
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def _edge_phase(grid: GridSpec, sign: int) -> np.ndarray:
    # exp(sign * i xi_k x_0) in FFT order, x_0 = -L the first node
    ph = np.exp(sign * 1j * grid.fft_freqs * (-grid.half_width))
    if grid.dim == 1:
        return ph
    return ph[:, None] * ph[None, :]


def forward_values(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Array-level forward transform over the trailing ``d`` axes."""
    axes = _spatial_axes(values, grid)
    spec = np.fft.fftn(values, axes=axes) * _edge_phase(grid, -1) * grid.cell
    return np.fft.fftshift(spec, axes=axes)


def inverse_values(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Array-level inverse of :func:`forward_values`."""
    axes = _spatial_axes(values, grid)
    spec = np.fft.ifftshift(values, axes=axes) * _edge_phase(grid, +1)
    return np.fft.ifftn(spec, axes=axes) / grid.cell


def apply_multiplier(values: np.ndarray, grid: GridSpec, symbol: np.ndarray) -> np.ndarray:
    """Apply a Fourier multiplier given in FFT frequency order."""
    axes = _spatial_axes(values, grid)
    return np.fft.ifftn(np.fft.fftn(values, axes=axes) * symbol, axes=axes)


def lp_norms(values: np.ndarray, grid: GridSpec, p: float) -> np.ndarray:
    """Riemann-sum ``L^p`` norms over the trailing ``d`` axes.

    ``p = inf`` gives the maximum modulus.
    """
    axes = _spatial_axes(values, grid)
    a = np.abs(values)
    if np.isinf(p):
        return a.max(axis=axes)
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if p == 2:
        return np.sqrt((a * a).sum(axis=axes) * grid.cell)
    return ((a**p).sum(axis=axes) * grid.cell) ** (1.0 / p)


def lp_norm(f: WaveFunction, p: float) -> float:
    """``(sum_j |f(x_j)|^p dx^d)^(1/p)``, with ``dxi^d`` for frequency samples."""
    norm = float(lp_norms(f.values, f.grid, p))
    if f.domain == "frequency" and not np.isinf(p):
        norm *= (f.grid.dxi / f.grid.dx) ** (f.grid.dim / p)
    return norm


def sobolev_symbol(grid: GridSpec, k: float, hbar: float) -> np.ndarray:
    """``(1 + hbar |xi|^2)^(k/2)`` in FFT order."""
    return (1.0 + hbar * grid.freq_sq()) ** (0.5 * k)


def sobolev_values(values: np.ndarray, grid: GridSpec, k: float, hbar: float) -> np.ndarray:
    if k == 0:
        return np.array(values, dtype=np.complex128)
    return apply_multiplier(values, grid, sobolev_symbol(grid, k, hbar))


def sobolev_multiplier(f: WaveFunction, k: float, hbar: float) -> WaveFunction:
    """Apply ``(1 - hbar Laplacian)^(k/2)`` as a Fourier multiplier."""
    if f.domain != "position":
        raise ValueError("sobolev_multiplier expects position-domain data")
    return f.with_values(sobolev_values(f.values, f.grid, k, hbar))


def sobolev_norms(values: np.ndarray, grid: GridSpec, p: float, k: float, hbar: float) -> np.ndarray:
    return lp_norms(sobolev_values(values, grid, k, hbar), grid, p)


def sobolev_norm(f: WaveFunction, p: float, k: float, hbar: float) -> float:
    """Rescaled Sobolev norm ``||(1 - hbar Laplacian)^(k/2) f||_p``."""
    return lp_norm(sobolev_multiplier(f, k, hbar), p)


def k_exponent(p: float, d: int = 1) -> float:
    """Sharp derivative loss ``2 d |1/2 - 1/p|`` for ``1 < p < inf``."""
    if not 1.0 < p < np.inf:
        raise ValueError(f"p must satisfy 1 < p < inf, got {p}")
    return 2.0 * d * abs(0.5 - 1.0 / p)


def _spectral_tail(values: np.ndarray, grid: GridSpec, cutoff: float) -> float:
    """Fraction of spectral mass with some ``|xi_i| > cutoff``."""
    spec = np.abs(np.fft.fftn(values, axes=_spatial_axes(values, grid))) ** 2
    k = np.abs(grid.fft_freqs) > cutoff
    mask = k if grid.dim == 1 else (k[:, None] | k[None, :])
    total = spec.sum()
    return float(spec[..., mask].sum() / total) if total > 0 else 0.0


def _outside_mass(values: np.ndarray, grid: GridSpec, radius: float) -> float:
    """Worst fraction of ``|f|^2`` with some coordinate outside ``[-radius, radius)``."""
    inside = (grid.axis >= -radius) & (grid.axis < radius)
    mask = ~inside if grid.dim == 1 else ~(inside[:, None] & inside[None, :])
    dens = np.abs(values) ** 2
    axes = _spatial_axes(values, grid)
    total = dens.sum(axis=axes)
    out = np.where(mask, dens, 0.0).sum(axis=axes)
    return float(np.max(np.where(total > 0, out / np.where(total > 0, total, 1.0), 0.0)))


def _resample_axis(values: np.ndarray, grid: GridSpec, scale: float, axis: int) -> np.ndarray:
    """Evaluate the trigonometric interpolant at ``scale * x_j`` along one axis.

    Points that land outside the box are set to zero rather than wrapped.
    """
    x = grid.axis
    u = scale * x
    coef = np.fft.fft(values, axis=axis) / grid.n
    kernel = np.exp(1j * np.outer(u + grid.half_width, grid.fft_freqs))
    kernel[(u < -grid.half_width) | (u >= grid.half_width)] = 0.0
    moved = np.moveaxis(coef, axis, -1)
    out = moved @ kernel.T
    return np.moveaxis(out, -1, axis)


def dilation_values(values: np.ndarray, grid: GridSpec, hbar: float, direction: str) -> np.ndarray:
    """Array-level version of :func:`dilate` acting on the trailing axes."""
    if direction == "compress":
        scale, amp = np.sqrt(hbar), hbar ** (grid.dim / 4.0)
    elif direction == "expand":
        scale, amp = 1.0 / np.sqrt(hbar), hbar ** (-grid.dim / 4.0)
    else:
        raise ValueError(f"direction must be 'compress' or 'expand', got {direction!r}")
    out = np.array(values, dtype=np.complex128)
    if hbar == 1.0:
        return out
    if scale > 1.0:
        # sampling f(scale*x) needs f band-limited to the reduced Nyquist rate
        tail = _spectral_tail(out, grid, 0.95 * np.pi / (grid.dx * scale))
        if tail > BOUNDARY_MASS_TOL:
            raise BoundaryMassError(
                f"dilation would alias: spectral tail {tail:.3e}; refine the grid",
                mass=tail,
            )
    if scale < 1.0:
        # only |x| < scale * L is read back; the rest of f would be dropped
        lost = _outside_mass(out, grid, scale * grid.half_width)
        if lost > BOUNDARY_MASS_TOL:
            raise BoundaryMassError(
                f"dilation would truncate the input: mass fraction {lost:.3e} beyond |x| = "
                f"{scale * grid.half_width:.4g}; enlarge the box",
                mass=lost,
            )
    for ax in _spatial_axes(out, grid):
        out = _resample_axis(out, grid, scale, ax)
    out *= amp
    mass = boundary_mass(out, grid)
    if mass > BOUNDARY_MASS_TOL:
        raise BoundaryMassError(
            f"excessive boundary mass {mass:.3e} after dilation; enlarge the box",
            mass=mass,
        )
    return out


def dilate(f: WaveFunction, hbar: float, direction: Literal["compress", "expand"]) -> WaveFunction:
    """Semiclassical dilation.

    ``compress`` returns ``hbar^(d/4) f(hbar^(1/2) x)``, which carries features
    of size ``hbar^(1/2)`` to unit size; ``expand`` is its inverse
    ``hbar^(-d/4) f(hbar^(-1/2) x)``. Both are evaluated from the band-limited
    interpolant of ``f`` and preserve the ``L^2`` norm.

    Raises
    ------
    BoundaryMassError
        If the dilated function no longer fits the box or would alias.
    """
    if f.domain != "position":
        raise ValueError("dilate expects position-domain data")
    return f.with_values(dilation_values(f.values, f.grid, hbar, direction))
