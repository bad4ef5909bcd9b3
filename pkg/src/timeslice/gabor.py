"""Phase-space analysis: STFT, modulation norms and Gabor matrices.

Phase-space shifts are ``pi(x, xi) g(y) = exp(i y xi) g(y - x)``. Position
shifts are snapped to grid nodes and modulations are exact, so every STFT
value is a plain Riemann sum

    V_g f(x, xi) = sum_y f(y) conj(g(y - x)) exp(-i y xi) dy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Iterator, NamedTuple

import numpy as np
from scipy import stats

from .classical import PotentialModel, hamiltonian_flow
from .exceptions import CoverageError, FitError
from .grid import GridSpec, WaveFunction, dilation_values, fmt, lp_norms

#: Window samples below this fraction of the peak are treated as zero.
WINDOW_CUTOFF = 1e-17


@dataclass(frozen=True, eq=False)
class Window:
    """Sampled analysis window ``g`` on a one-dimensional grid."""

    grid: GridSpec
    values: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        if self.grid.dim != 1:
            raise ValueError("windows are one-dimensional")
        v = np.asarray(self.values, dtype=np.complex128).reshape(self.grid.n)
        object.__setattr__(self, "values", v)

    @property
    def norm(self) -> float:
        return float(lp_norms(self.values, self.grid, 2))

    @classmethod
    def gaussian(cls, grid: GridSpec) -> "Window":
        """``pi^(-1/4) exp(-x^2/2)``."""
        return cls(grid, np.pi**-0.25 * np.exp(-0.5 * grid.axis**2), "gaussian")

    @classmethod
    def hermite1(cls, grid: GridSpec) -> "Window":
        """First Hermite function ``sqrt(2) pi^(-1/4) x exp(-x^2/2)``."""
        x = grid.axis
        return cls(grid, np.sqrt(2.0) * np.pi**-0.25 * x * np.exp(-0.5 * x**2), "hermite1")

    def support(self) -> tuple[int, int]:
        """Index offsets ``(lo, hi)`` relative to the origin node where ``|g|`` is
        above :data:`WINDOW_CUTOFF` of its peak."""
        a = np.abs(self.values)
        idx = np.nonzero(a > WINDOW_CUTOFF * a.max())[0]
        origin = self.grid.n // 2
        return int(idx[0] - origin), int(idx[-1] - origin)

    def shifted(self, x: float) -> np.ndarray:
        """``g(y - x)`` with ``x`` snapped to the grid, zero-filled."""
        m = int(round(x / self.grid.dx))
        out = np.zeros_like(self.values)
        if m >= 0:
            out[m:] = self.values[: self.grid.n - m]
        else:
            out[:m] = self.values[-m:]
        return out


@dataclass(frozen=True)
class PhaseLattice:
    """Rectangular lattice ``alpha Z x beta Z`` truncated to a box.

    Parameters
    ----------
    alpha, beta : float
        Spacings in position and frequency.
    radius : float
        Truncation radius ``R`` in position (and frequency unless
        ``xi_radius`` is given).
    xi_radius : float, optional
    """

    alpha: float = 0.5
    beta: float = 0.5
    radius: float = 8.0
    xi_radius: float | None = None

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0 and self.radius >= 0):
            raise ValueError("lattice spacings must be positive")

    @staticmethod
    def _axis(step: float, radius: float) -> np.ndarray:
        k = int(np.floor(radius / step + 1e-9))
        return step * np.arange(-k, k + 1)

    @property
    def xs(self) -> np.ndarray:
        return self._axis(self.alpha, self.radius)

    @property
    def xis(self) -> np.ndarray:
        return self._axis(self.beta, self.radius if self.xi_radius is None else self.xi_radius)

    @property
    def nodes(self) -> np.ndarray:
        """All nodes ``(x, xi)``, position-major, shape ``(M, 2)``."""
        X, XI = np.meshgrid(self.xs, self.xis, indexing="ij")
        return np.stack([X.ravel(), XI.ravel()], axis=1)

    @property
    def cell(self) -> float:
        return self.alpha * self.beta

    def restricted(self, radius: float) -> "PhaseLattice":
        return PhaseLattice(self.alpha, self.beta, radius, None if self.xi_radius is None else min(self.xi_radius, radius))


def snap(x: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Round positions to the nearest multiple of ``dx`` (a grid node)."""
    return np.round(np.asarray(x) / grid.dx) * grid.dx


def stft_values(values: np.ndarray, g: Window, lattice: PhaseLattice, chunk: int = 64) -> np.ndarray:
    """STFT of a batch ``(m, n)`` or a single ``(n,)`` array.

    Returns
    -------
    ndarray
        Shape ``(m, len(xs), len(xis))`` (leading axis dropped for a single input).
    """
    grid = g.grid
    vals = np.asarray(values, dtype=np.complex128)
    single = vals.ndim == 1
    vals = np.atleast_2d(vals)
    xs, xis = lattice.xs, lattice.xis
    if np.any(np.abs(xs) > grid.half_width):
        raise ValueError("lattice positions fall outside the box")
    shifts = np.round(xs / grid.dx).astype(int)
    lo, hi = g.support()
    width = hi - lo + 1
    origin = grid.n // 2
    gseg = np.conj(g.values[origin + lo: origin + hi + 1])
    pad = width + grid.n
    fpad = np.zeros((vals.shape[0], grid.n + 2 * pad), np.complex128)
    fpad[:, pad:pad + grid.n] = vals
    starts = origin + lo + shifts + pad
    idx = starts[:, None] + np.arange(width)[None, :]
    # y coordinate of each segment's first sample
    y0 = grid.axis[0] + (starts - pad) * grid.dx
    base = np.exp(-1j * np.outer(np.arange(width) * grid.dx, xis)) * grid.dx
    phase = np.exp(-1j * np.outer(y0, xis))
    out = np.empty((vals.shape[0], xs.size, xis.size), np.complex128)
    for b0 in range(0, vals.shape[0], chunk):
        seg = fpad[b0:b0 + chunk][:, idx] * gseg
        out[b0:b0 + chunk] = (seg @ base) * phase
    return out[0] if single else out


def stft(f: WaveFunction, g: Window, lattice: PhaseLattice) -> np.ndarray:
    """Short-time Fourier transform on the lattice nodes.

    Returns
    -------
    ndarray
        ``V[a, b] = V_g f(xs[a], xis[b])`` with ``xs[a]`` snapped to the grid.
    """
    if f.grid.dim != 1 or not f.grid.same_as(g.grid):
        raise ValueError("window and function must share a one-dimensional grid")
    return stft_values(f.values, g, lattice)


def synthesize(V: np.ndarray, g: Window, lattice: PhaseLattice) -> np.ndarray:
    """Riemann sum of ``V(z) pi(z) g`` over the lattice (without normalization)."""
    grid = g.grid
    y = grid.axis
    modes = np.exp(1j * np.outer(lattice.xis, y))
    rows = V @ modes
    out = np.zeros(grid.n, np.complex128)
    for a, x in enumerate(lattice.xs):
        out += rows[a] * g.shifted(x)
    return out * lattice.cell


def stft_inversion_check(f: WaveFunction, g: Window, lattice: PhaseLattice) -> float:
    """Relative ``L^2`` error of ``(2 pi)^-1 ||g||^-2 sum V_g f(z) pi(z) g alpha beta``."""
    V = stft(f, g, lattice)
    rec = synthesize(V, g, lattice) / (2 * np.pi * g.norm**2)
    return float(lp_norms(rec - f.values, f.grid, 2) / lp_norms(f.values, f.grid, 2))


def _ring_mass(V: np.ndarray) -> float:
    a = np.abs(V) ** 2
    ring = a[..., 0, :].sum(-1) + a[..., -1, :].sum(-1) + a[..., 1:-1, 0].sum(-1) + a[..., 1:-1, -1].sum(-1)
    total = a.sum(axis=(-2, -1))
    return float(np.max(ring / total))


def modulation_norms(
    values: np.ndarray,
    g: Window,
    p: float,
    lattice: PhaseLattice,
    hbar: float | None = None,
    tail_tol: float = 1e-8,
) -> np.ndarray:
    """Array-level :func:`modulation_norm` for a batch ``(m, n)``."""
    vals = np.atleast_2d(np.asarray(values, np.complex128))
    if hbar is not None and hbar != 1.0:
        vals = dilation_values(vals, g.grid, hbar, "compress")
    V = stft_values(vals, g, lattice)
    tail = _ring_mass(V)
    if tail > tail_tol:
        raise CoverageError(
            f"lattice does not cover the STFT: edge mass fraction {tail:.2e} > {tail_tol:.0e}",
            tail=tail,
        )
    a = np.abs(V)
    if np.isinf(p):
        return a.max(axis=(-2, -1))
    return ((a**p).sum(axis=(-2, -1)) * lattice.cell) ** (1.0 / p)


def modulation_norm(
    f: WaveFunction,
    g: Window,
    p: float,
    lattice: PhaseLattice,
    hbar: float | None = None,
    tail_tol: float = 1e-8,
) -> float:
    """Discrete ``L^p`` norm of the STFT over lattice cells.

    With ``hbar`` the function is first compressed by :func:`~timeslice.grid.dilate`,
    giving the semiclassical norm. ``p = inf`` gives the maximum.

    Raises
    ------
    CoverageError
        If the outermost lattice ring carries more than ``tail_tol`` of the
        squared STFT mass.
    """
    return float(modulation_norms(f.values, g, p, lattice, hbar, tail_tol)[0])


# ---------------------------------------------------------------------------
# canonical maps


@dataclass(frozen=True, eq=False)
class CanonicalMap:
    """Vectorized map on phase space, ``z`` of shape ``(M, 2)``."""

    func: Callable[[np.ndarray], np.ndarray]
    name: str = "map"
    hbar_rescaled: bool = False

    def __call__(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, float))
        return np.asarray(self.func(z), float).reshape(z.shape)

    def jacobian_det(self, z: np.ndarray, h: float = 1e-5) -> np.ndarray:
        """Finite-difference Jacobian determinant at each point."""
        z = np.atleast_2d(np.asarray(z, float))
        ex, ep = np.array([h, 0.0]), np.array([0.0, h])
        dx = (self(z + ex) - self(z - ex)) / (2 * h)
        dp = (self(z + ep) - self(z - ep)) / (2 * h)
        return dx[:, 0] * dp[:, 1] - dx[:, 1] * dp[:, 0]

    def compose(self, other: "CanonicalMap") -> "CanonicalMap":
        """``self o other``."""
        return CanonicalMap(lambda z: self(other(z)), f"{self.name}o{other.name}", self.hbar_rescaled)

    @classmethod
    def identity(cls) -> "CanonicalMap":
        return cls(lambda z: z.copy(), "identity")

    @classmethod
    def shear(cls, tau: float) -> "CanonicalMap":
        """Free flow ``(x, xi) -> (x + tau xi, xi)``."""
        return cls(lambda z: np.stack([z[:, 0] + tau * z[:, 1], z[:, 1]], 1), f"shear({tau:g})")

    @classmethod
    def rotation(cls, tau: float) -> "CanonicalMap":
        """Harmonic flow ``(x, xi) -> (x cos + xi sin, -x sin + xi cos)``."""
        c, s = np.cos(tau), np.sin(tau)
        return cls(lambda z: np.stack([c * z[:, 0] + s * z[:, 1], -s * z[:, 0] + c * z[:, 1]], 1), f"rotation({tau:g})")

    @classmethod
    def from_flow(cls, pot: PotentialModel, s: float, t: float, nsteps: int = 200) -> "CanonicalMap":
        """Hamiltonian flow from ``s`` to ``t`` integrated with RK4."""

        def f(z):
            pt = hamiltonian_flow(pot, s, t, z[:, 0], z[:, 1], nsteps)
            return np.stack([pt.x, pt.xi], 1)

        return cls(f, f"flow({pot.label},{s:g},{t:g})")


def rescaled_flow(chi: CanonicalMap, hbar: float) -> CanonicalMap:
    """``z -> hbar^(-1/2) chi(hbar^(1/2) z)``."""
    if hbar == 1.0:
        return CanonicalMap(chi.func, chi.name, True)
    r = np.sqrt(hbar)
    return CanonicalMap(lambda z: chi(r * z) / r, f"{chi.name}[hbar={hbar:g}]", True)


# ---------------------------------------------------------------------------
# Gabor matrices


class GaborMatrixSample(NamedTuple):
    z: tuple
    w: tuple
    magnitude: float


def _as_operator(T) -> Callable[[np.ndarray], np.ndarray]:
    if hasattr(T, "apply_values"):
        return T.apply_values
    if hasattr(T, "transform"):
        return T.transform
    if callable(T):
        return T
    raise TypeError("operator must be a SliceKernel, an estimator with transform, or a callable")


@dataclass(frozen=True, eq=False)
class GaborMatrix:
    """Magnitudes ``|<T pi(z) g, pi(w) g>|`` for all lattice pairs.

    ``z`` and ``w`` hold the node coordinates actually used (positions snapped
    to the grid); ``magnitude[i, k]`` belongs to ``(z[i], w[k])``.
    """

    z: np.ndarray
    w: np.ndarray
    magnitude: np.ndarray
    lattice_z: PhaseLattice
    lattice_w: PhaseLattice

    def samples(self) -> Iterator[GaborMatrixSample]:
        for i, zi in enumerate(self.z):
            for k, wk in enumerate(self.w):
                yield GaborMatrixSample(tuple(zi), tuple(wk), float(self.magnitude[i, k]))

    def distances(self, chi: CanonicalMap) -> np.ndarray:
        cz = chi(self.z)
        return np.sqrt(((self.w[None, :, :] - cz[:, None, :]) ** 2).sum(-1))

    def restricted(self, radius: float) -> "GaborMatrix":
        """Keep nodes with ``max(|x|, |xi|) <= radius`` in both ``z`` and ``w``."""
        tol = 1e-9 + 0.5 * max(self.lattice_z.alpha, self.lattice_w.alpha)
        zi = np.max(np.abs(self.z), axis=1) <= radius + tol
        wi = np.max(np.abs(self.w), axis=1) <= radius + tol
        return GaborMatrix(
            self.z[zi], self.w[wi], self.magnitude[np.ix_(zi, wi)],
            self.lattice_z.restricted(radius), self.lattice_w.restricted(radius),
        )

    def to_csv(self, path, chi: CanonicalMap) -> None:
        """Write ``z_x, z_xi, w_x, w_xi, magnitude, r`` rows."""
        r = self.distances(chi)
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["z_x", "z_xi", "w_x", "w_xi", "magnitude", "r"])
            for i, zi in enumerate(self.z):
                for k, wk in enumerate(self.w):
                    out.writerow([fmt(zi[0]), fmt(zi[1]), fmt(wk[0]), fmt(wk[1]), fmt(self.magnitude[i, k]), fmt(r[i, k])])


def wave_packets(g: Window, lattice: PhaseLattice) -> tuple[np.ndarray, np.ndarray]:
    """``pi(z) g`` for every lattice node, plus the snapped node coordinates."""
    y = g.grid.axis
    z = lattice.nodes
    zs = np.column_stack([snap(z[:, 0], g.grid), z[:, 1]])
    packets = np.empty((z.shape[0], g.grid.n), np.complex128)
    k = 0
    for x in lattice.xs:
        gs = g.shifted(x)
        for xi in lattice.xis:
            packets[k] = np.exp(1j * xi * y) * gs
            k += 1
    return packets, zs


def gabor_matrix(
    T,
    g: Window,
    lattice_z: PhaseLattice,
    lattice_w: PhaseLattice,
    hbar: float | None = None,
    chunk: int = 128,
) -> GaborMatrix:
    """Gabor matrix magnitudes of an operator.

    Parameters
    ----------
    T : SliceKernel, estimator or callable
        Acts on arrays of shape ``(m, n)``.
    g : Window
    lattice_z, lattice_w : PhaseLattice
        Input and output nodes.
    hbar : float, optional
        Analyze the conjugated operator ``D_compress T D_expand`` instead.
    """
    op = _as_operator(T)
    packets, zs = wave_packets(g, lattice_z)
    ws = lattice_w.nodes
    ws = np.column_stack([snap(ws[:, 0], g.grid), ws[:, 1]])
    mag = np.empty((zs.shape[0], ws.shape[0]))
    for b0 in range(0, zs.shape[0], chunk):
        batch = packets[b0:b0 + chunk]
        if hbar is not None and hbar != 1.0:
            batch = dilation_values(batch, g.grid, hbar, "expand")
        out = np.atleast_2d(op(batch))
        if hbar is not None and hbar != 1.0:
            out = dilation_values(out, g.grid, hbar, "compress")
        V = stft_values(out, g, lattice_w)
        mag[b0:b0 + chunk] = np.abs(V).reshape(V.shape[0], -1)
    return GaborMatrix(zs, ws, mag, lattice_z, lattice_w)


@dataclass(frozen=True)
class SeminormReport:
    value: float
    radius: float
    inner_value: float
    stability: float

    def as_dict(self) -> dict:
        return {"value": self.value, "radius": self.radius, "inner_value": self.inner_value, "stability": self.stability}


def _seminorm_value(G: GaborMatrix, chi: CanonicalMap, m: float) -> float:
    r2 = G.distances(chi) ** 2
    return float(np.max((1.0 + r2) ** (0.5 * m) * G.magnitude))


def fio_seminorm(G: GaborMatrix, chi: CanonicalMap, m: float, radius: float | None = None) -> SeminormReport:
    """``max (1 + |w - chi(z)|^2)^(m/2) |<T pi(z) g, pi(w) g>|`` over the samples.

    The value is computed with ``z`` and ``w`` truncated to ``radius`` (default:
    the ``z`` lattice radius) and again to ``radius - 2``; ``stability`` is the
    ratio of the two.
    """
    R = G.lattice_z.radius if radius is None else radius
    outer = _seminorm_value(G.restricted(R), chi, m)
    inner = _seminorm_value(G.restricted(R - 2), chi, m) if R > 2 else outer
    return SeminormReport(outer, R, inner, outer / inner if inner > 0 else np.inf)


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    stderr: float
    r: np.ndarray
    peak: np.ndarray


def decay_fit(
    G: GaborMatrix,
    chi: CanonicalMap,
    r_min: float = 2.0,
    r_max: float | None = None,
    bin_width: float | None = None,
    min_bins: int = 6,
) -> DecayFit:
    """Fit ``max magnitude ~ (1 + r)^(-m)`` over distance bins ``r = |w - chi(z)|``.

    Per-bin maxima are used. Returns ``m`` (the negated slope) with its
    standard error.

    Raises
    ------
    FitError
        With fewer than ``min_bins`` nonempty bins in ``[r_min, r_max]``.
    """
    r = G.distances(chi).ravel()
    mag = G.magnitude.ravel()
    r_max = G.lattice_z.radius if r_max is None else r_max
    width = G.lattice_w.alpha if bin_width is None else bin_width
    sel = (r >= r_min) & (r <= r_max) & (mag > 0)
    bins = np.floor((r[sel] - r_min) / width).astype(int)
    if bins.size == 0:
        raise FitError("no samples in the fitting window")
    peak = np.full(bins.max() + 1, -np.inf)
    np.maximum.at(peak, bins, mag[sel])
    filled = np.isfinite(peak)
    if filled.sum() < min_bins:
        raise FitError(f"only {int(filled.sum())} nonempty distance bins, need {min_bins}")
    centers = r_min + (np.arange(peak.size) + 0.5) * width
    fit = stats.linregress(np.log1p(centers[filled]), np.log(peak[filled]))
    return DecayFit(float(-fit.slope), float(fit.stderr), centers[filled], peak[filled])


def argmax_tracking(G: GaborMatrix, chi: CanonicalMap) -> float:
    """Fraction of rows whose arg-max ``w`` lies within one lattice cell of ``chi(z)``.

    Rows whose image falls outside the ``w`` lattice are not counted.
    """
    cz = chi(G.z)
    wx, wxi = G.lattice_w.xs, G.lattice_w.xis
    inside = (np.abs(cz[:, 0]) <= wx.max()) & (np.abs(cz[:, 1]) <= wxi.max())
    best = G.w[np.argmax(G.magnitude, axis=1)]
    close = (np.abs(best[:, 0] - cz[:, 0]) <= G.lattice_w.alpha + 1e-9) & (
        np.abs(best[:, 1] - cz[:, 1]) <= G.lattice_w.beta + 1e-9
    )
    if not inside.any():
        raise CoverageError("no canonical image falls inside the output lattice")
    return float(np.mean(close[inside]))


@dataclass(frozen=True)
class CompositionReport:
    composed: float
    first: float
    second: float
    bound: float

    @property
    def ratio(self) -> float:
        return self.composed / (self.first * self.second)

    @property
    def passed(self) -> bool:
        return bool(self.ratio <= self.bound)

    def as_dict(self) -> dict:
        return {"composed": self.composed, "first": self.first, "second": self.second,
                "ratio": self.ratio, "bound": self.bound, "passed": self.passed}


def composition_decay_check(
    T1,
    T2,
    chi1: CanonicalMap,
    chi2: CanonicalMap,
    m: float,
    g: Window,
    lattice_z: PhaseLattice,
    lattice_w: PhaseLattice,
    bound: float = 50.0,
) -> CompositionReport:
    """Compare the seminorm of ``T1 T2`` against ``chi1 o chi2`` with the
    product of the individual seminorms."""
    op1, op2 = _as_operator(T1), _as_operator(T2)
    both = lambda v: op1(op2(v))
    s12 = fio_seminorm(gabor_matrix(both, g, lattice_z, lattice_w), chi1.compose(chi2), m).value
    s1 = fio_seminorm(gabor_matrix(op1, g, lattice_z, lattice_w), chi1, m).value
    s2 = fio_seminorm(gabor_matrix(op2, g, lattice_z, lattice_w), chi2, m).value
    return CompositionReport(s12, s1, s2, bound)
