"""Short-time slice operators and their composition over a subdivision.

A slice of order ``N`` on ``[s, t]`` has the kernel

    K(x, y) = (2 pi i (t - s) hbar)^(-1/2) exp(i S(t, s, x, y) / hbar) e_N(x, y)

with ``e_0 = 1`` and ``e_1 = a_1`` the Van Vleck amplitude. Applying a slice is a
Riemann sum over the ``y`` grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .classical import (
    PotentialModel,
    _integrate,
    default_table_steps,
    generating_table,
    GeneratingTable,
)
from .exceptions import CausticError, GuardError, ResolutionError
from .grid import GridSpec, WaveFunction, apply_multiplier, boundary_mass, BOUNDARY_MASS_TOL
from .exceptions import BoundaryMassError

#: Fraction of the sampling rate ``2 pi / dy`` that the phase gradient may use.
GUARD_FRACTION = 0.8
#: Kernels with fewer points per axis than this are materialized densely.
DENSE_LIMIT = 2048
#: Rows per block in matrix-free application.
BLOCK_ROWS = 256


@dataclass(frozen=True)
class Subdivision:
    """Strictly increasing times ``s = t_0 < ... < t_L = t``."""

    times: tuple

    def __post_init__(self):
        tt = tuple(float(v) for v in self.times)
        if len(tt) < 2:
            raise ValueError("a subdivision needs at least two times")
        if any(b <= a for a, b in zip(tt, tt[1:])):
            raise ValueError("subdivision times must be strictly increasing")
        object.__setattr__(self, "times", tt)

    @classmethod
    def uniform(cls, s: float, t: float, slices: int) -> "Subdivision":
        if slices < 1:
            raise ValueError("need at least one slice")
        return cls(tuple(s + (t - s) * k / slices for k in range(slices + 1)))

    @property
    def s(self) -> float:
        return self.times[0]

    @property
    def t(self) -> float:
        return self.times[-1]

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.times)

    def __len__(self) -> int:
        return len(self.times) - 1

    def refine_largest(self) -> "Subdivision":
        """Insert the midpoint of the largest gap."""
        j = int(np.argmax(self.gaps))
        mid = 0.5 * (self.times[j] + self.times[j + 1])
        return Subdivision(self.times[: j + 1] + (mid,) + self.times[j + 1:])


def mesh(omega: Subdivision) -> float:
    """Largest gap of the subdivision."""
    return float(np.max(omega.gaps))


@dataclass(frozen=True, eq=False)
class AmplitudeTable:
    """First transport amplitude on an ``(x, y)`` product grid."""

    s: float
    t: float
    x_axis: np.ndarray
    y_axis: np.ndarray
    values: np.ndarray
    method: str


def _van_vleck(table: GeneratingTable) -> np.ndarray:
    det = -table.S_xy
    if not np.all(det > 0):
        i, j = np.argwhere(~(det > 0))[0]
        raise CausticError(
            f"mixed Hessian lost definiteness at (x, y) = "
            f"({table.x_axis[i]:.6g}, {table.y_axis[j]:.6g}); caustic ahead",
            x=float(table.x_axis[i]), y=float(table.y_axis[j]),
        )
    return np.sqrt(table.tau * det)


def _transport_ode(pot, table: GeneratingTable, nsteps: int, eps_rel: float = 1e-4) -> np.ndarray:
    """Integrate ``d log a/dtau = -(S_xx(tau) - 1/(tau - s))/2`` along each path.

    Along the path with initial momentum ``eta`` the Laplacian of the action in
    ``x`` equals ``(dxi/deta) / (dx/deta)``, read off the variational equations.
    """
    s, tau = table.s, table.tau
    eps = eps_rel * tau
    Y = np.broadcast_to(table.y_axis[None, :], table.S.shape)
    x, p, J, _, _ = _integrate(pot, s, s + eps, Y, table.eta, 8, jacobian=True)
    q, r = J[1], J[3]
    loga = np.zeros_like(x)
    h = (tau - eps) / nsteps

    def rhs(tk, x, p, q, r):
        c = pot.hess_V(tk, x)
        return p, -pot.grad_V(tk, x), r, -c * q, -0.5 * (r / q - 1.0 / (tk - s))

    for k in range(nsteps):
        tk = s + eps + k * h
        k1 = rhs(tk, x, p, q, r)
        k2 = rhs(tk + h / 2, x + h / 2 * k1[0], p + h / 2 * k1[1], q + h / 2 * k1[2], r + h / 2 * k1[3])
        k3 = rhs(tk + h / 2, x + h / 2 * k2[0], p + h / 2 * k2[1], q + h / 2 * k2[2], r + h / 2 * k2[3])
        k4 = rhs(tk + h, x + h * k3[0], p + h * k3[1], q + h * k3[2], r + h * k3[3])
        inc = [h / 6 * (a + 2 * b + 2 * c + d) for a, b, c, d in zip(k1, k2, k3, k4)]
        x, p, q, r = x + inc[0], p + inc[1], q + inc[2], r + inc[3]
        loga = loga + inc[4]
    return np.exp(loga)


def amplitude_a1(
    pot: PotentialModel,
    s: float,
    t: float,
    x_axis: np.ndarray,
    y_axis: np.ndarray,
    method: str = "van-vleck",
    table: GeneratingTable | None = None,
    nsteps: int | None = None,
) -> AmplitudeTable:
    """First transport amplitude with unit initial value.

    Parameters
    ----------
    method : {"van-vleck", "transport-ode"}
        ``van-vleck`` takes ``sqrt((t - s) * (-S_xy))`` from the table's mixed
        difference; ``transport-ode`` integrates the transport equation along
        each connecting path, starting just after ``s``.
    table : GeneratingTable, optional
        Reused when given, otherwise built.

    Raises
    ------
    CausticError
        If ``-S_xy`` is not positive somewhere.
    """
    if table is None:
        table = generating_table(pot, s, t, x_axis, y_axis)
    if method == "van-vleck":
        vals = _van_vleck(table)
    elif method == "transport-ode":
        n = nsteps or max(200, default_table_steps(table.tau))
        vals = _transport_ode(pot, table, n)
        if not np.all(np.isfinite(vals) & (vals > 0)):
            raise CausticError("transport amplitude degenerated before t")
    else:
        raise ValueError(f"unknown amplitude method {method!r}")
    return AmplitudeTable(table.s, table.t, table.x_axis, table.y_axis, vals, method)


@dataclass(frozen=True, eq=False)
class SliceKernel:
    """Discretized kernel of a single slice.

    Kernel entries are produced on demand from the phase and amplitude tables;
    below :data:`DENSE_LIMIT` points they are cached as a dense matrix.
    """

    order: int
    s: float
    t: float
    hbar: float
    x_axis: np.ndarray
    y_axis: np.ndarray
    phase: np.ndarray
    amplitude: np.ndarray | None
    guard_ratio: float

    @property
    def tau(self) -> float:
        return self.t - self.s

    @property
    def weight(self) -> float:
        """Quadrature weight ``dy``."""
        return float(self.y_axis[1] - self.y_axis[0])

    @property
    def prefactor(self) -> complex:
        # principal branch: (2 pi tau hbar)^(-1/2) exp(-i pi/4)
        return (2 * np.pi * self.tau * self.hbar) ** -0.5 * np.exp(-0.25j * np.pi)

    def block(self, rows=slice(None)) -> np.ndarray:
        """Kernel values ``K(x_i, y_j)`` for a block of rows, without ``dy``."""
        out = np.exp((1j / self.hbar) * self.phase[rows])
        if self.amplitude is not None:
            out *= self.amplitude[rows]
        out *= self.prefactor
        return out

    @cached_property
    def values(self) -> np.ndarray:
        """Dense kernel matrix (without ``dy``)."""
        return self.block()

    @property
    def dense(self) -> bool:
        return self.x_axis.size < DENSE_LIMIT

    def apply_values(self, F: np.ndarray) -> np.ndarray:
        """Apply to samples of shape ``(n_y,)`` or ``(batch, n_y)``."""
        F = np.asarray(F, dtype=np.complex128)
        single = F.ndim == 1
        Ft = np.atleast_2d(F).T
        if Ft.shape[0] != self.y_axis.size:
            raise ValueError("input does not match the kernel's y grid")
        if self.dense:
            out = self.values @ Ft
        else:
            out = np.empty((self.x_axis.size, Ft.shape[1]), np.complex128)
            for r0 in range(0, self.x_axis.size, BLOCK_ROWS):
                rows = slice(r0, r0 + BLOCK_ROWS)
                out[rows] = self.block(rows) @ Ft
        out *= self.weight
        return out[:, 0] if single else out.T


def nyquist_ratio(table: GeneratingTable, hbar: float) -> float:
    """``dy max|dS/dy| / hbar`` over the table."""
    return float(table.dy * np.max(np.abs(table.eta)) / hbar)


def build_slice_kernel(
    table: GeneratingTable,
    amp: AmplitudeTable | None,
    order: int,
    hbar: float,
    guard_fraction: float = GUARD_FRACTION,
) -> SliceKernel:
    """Assemble the slice kernel of order 0 or 1.

    Raises
    ------
    ResolutionError
        When ``dy max|dS/dy| / hbar`` exceeds ``guard_fraction * 2 pi``; the
        message names the smallest power-of-two grid that passes.
    """
    if order not in (0, 1):
        raise ValueError("only orders 0 and 1 are implemented")
    if order == 1 and amp is None:
        raise ValueError("order 1 needs an amplitude table")
    if not 0 < hbar <= 1:
        raise ValueError("hbar must lie in (0, 1]")
    ratio = nyquist_ratio(table, hbar)
    bound = guard_fraction * 2 * np.pi
    if ratio > bound:
        n = table.y_axis.size
        need = int(2 ** np.ceil(np.log2(n * ratio / bound)))
        raise ResolutionError(
            f"phase gradient unresolved: dy*max|dS/dy|/hbar = {ratio:.3f} > {bound:.3f} "
            f"for t - s = {table.tau:.6g}, hbar = {hbar:.6g}; use n >= {need}",
            ratio=ratio, bound=bound, required_n=need,
        )
    a = amp.values if order == 1 else None
    return SliceKernel(order, table.s, table.t, hbar, table.x_axis, table.y_axis, table.S, a, ratio)


def apply_kernel(K: SliceKernel, f: WaveFunction) -> WaveFunction:
    """``g(x_i) = sum_j K(x_i, y_j) f(y_j) dy``."""
    if f.grid.dim != 1:
        raise ValueError("slice kernels act on one-dimensional grids")
    if f.grid.n != K.y_axis.size or not np.allclose(f.grid.axis, K.y_axis, rtol=0, atol=1e-12):
        raise ValueError("wavefunction grid does not match the kernel")
    return f.with_values(K.apply_values(f.values))


def slice_kernel_for(
    pot: PotentialModel,
    s: float,
    t: float,
    grid: GridSpec,
    hbar: float,
    order: int,
    nsteps: int | None = None,
    table_method: str = "bvp",
    guard_fraction: float = GUARD_FRACTION,
) -> SliceKernel:
    """Build the generating table, amplitude and kernel for one gap."""
    if grid.dim != 1:
        raise ValueError("slice kernels are implemented in one dimension")
    table = generating_table(pot, s, t, grid.axis, grid.axis, nsteps=nsteps, method=table_method)
    amp = amplitude_a1(pot, s, t, grid.axis, grid.axis, table=table) if order == 1 else None
    return build_slice_kernel(table, amp, order, hbar, guard_fraction)


def _check_mass(values, grid, what):
    mass = boundary_mass(values, grid)
    if mass > BOUNDARY_MASS_TOL:
        raise BoundaryMassError(f"{what}: boundary mass {mass:.3e} exceeds {BOUNDARY_MASS_TOL:.0e}", mass=mass)


def compose_values(
    pot: PotentialModel,
    omega: Subdivision,
    hbar: float,
    order: int,
    values: np.ndarray,
    grid: GridSpec,
    **kernel_options,
) -> np.ndarray:
    """Array-level :func:`compose_slices` for a batch of shape ``(m, n)`` or ``(n,)``."""
    _check_mass(values, grid, "input")
    out = np.array(values, dtype=np.complex128)
    for j, (a, b) in enumerate(zip(omega.times, omega.times[1:]), start=1):
        try:
            K = slice_kernel_for(pot, a, b, grid, hbar, order, **kernel_options)
        except GuardError as err:
            raise type(err)(f"gap {j} [{a:.6g}, {b:.6g}]: {err}", **err.details) from err
        out = K.apply_values(out)
    _check_mass(out, grid, "output")
    return out


def compose_slices(
    pot: PotentialModel,
    omega: Subdivision,
    hbar: float,
    order: int,
    f: WaveFunction,
    **kernel_options,
) -> WaveFunction:
    """Apply the slices of ``omega`` right to left: ``E(t, t_{L-1}) ... E(t_1, s) f``.

    Parameters
    ----------
    pot : PotentialModel
    omega : Subdivision
    hbar : float
    order : int
        0 or 1.
    f : WaveFunction
    **kernel_options
        ``nsteps``, ``table_method`` and ``guard_fraction`` for every gap.

    Raises
    ------
    GuardError
        Any guard failure, with the offending gap named.
    """
    return f.with_values(compose_values(pot, omega, hbar, order, f.values, f.grid, **kernel_options))


def laplacian_values(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return apply_multiplier(values, grid, -grid.freq_sq())


def residual_values(
    pot: PotentialModel,
    hbar: float,
    s: float,
    t: float,
    order: int,
    values: np.ndarray,
    grid: GridSpec,
    dt: float = 5e-4,
    **kernel_options,
) -> np.ndarray:
    """Array-level :func:`parametrix_residual`."""
    if kernel_options.get("nsteps") is None:
        # one RK4 step count for all three tables, or S_t picks up a jump
        kernel_options["nsteps"] = default_table_steps(t - s, grid.axis[-1] - grid.axis[0])
    one = lambda b: compose_values(pot, Subdivision((s, b)), hbar, order, values, grid, **kernel_options)
    # fourth-order centered stencil: the slices oscillate at rate ~ energy/hbar
    p2, p1, m1, m2 = (one(t + k * dt) for k in (2, 1, -1, -2))
    mid = one(t)
    dEdt = (8 * (p1 - m1) - (p2 - m2)) / (12 * dt)
    V = pot.V(t, grid.axis)
    return 1j * hbar * dEdt + 0.5 * hbar**2 * laplacian_values(mid, grid) - V * mid


def parametrix_residual(
    pot: PotentialModel,
    hbar: float,
    s: float,
    t: float,
    order: int,
    f: WaveFunction,
    dt: float = 5e-4,
    **kernel_options,
) -> tuple[WaveFunction, float]:
    """Apply the Schrodinger operator to a single slice.

    Returns ``(i hbar d/dt + hbar^2/2 Laplacian - V) E(t, s) f`` with the time
    derivative a fourth-order centered difference on ``t + k dt``, ``|k| <= 2``, and the Laplacian a
    Fourier multiplier, together with its ``L^2`` norm.
    """
    if t - 2 * dt <= s:
        raise ValueError("t - s must exceed the finite-difference step")
    g = f.with_values(residual_values(pot, hbar, s, t, order, f.values, f.grid, dt, **kernel_options))
    return g, g.norm(2)
