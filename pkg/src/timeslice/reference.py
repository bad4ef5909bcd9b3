"""Reference solutions of the Schrodinger equation.

``i hbar u_t = -hbar^2/2 u_xx + V u``. Closed forms cover the free particle and
the harmonic oscillator; everything else goes through Strang splitting with
step doubling.
"""

from __future__ import annotations

import numpy as np

from .classical import PotentialModel
from .exceptions import FocalTimeError, GuardError, ResolutionError
from .grid import GridSpec, WaveFunction, apply_multiplier, lp_norms

#: ``|sin tau|`` below this is treated as a focal time by the harmonic kernel.
FOCAL_MARGIN = 0.05
#: Largest potential phase per split-step, ``(max V - min V) dt / hbar``.
SPLIT_PHASE_LIMIT = np.pi / 4
#: Nominal accuracy reported for closed-form solutions.
CLOSED_FORM_ACCURACY = 1e-12


def free_values(values: np.ndarray, grid: GridSpec, hbar: float, tau: float) -> np.ndarray:
    return apply_multiplier(values, grid, np.exp(-0.5j * hbar * tau * grid.freq_sq()))


def free_propagator(f: WaveFunction, hbar: float, tau: float) -> WaveFunction:
    """Free evolution ``exp(i hbar tau Laplacian / 2)`` as a Fourier multiplier."""
    return f.with_values(free_values(f.values, f.grid, hbar, tau))


def _reflect(values: np.ndarray) -> np.ndarray:
    """``f(-x)`` on the grid; the node ``-L`` maps outside the box and gets 0."""
    out = np.zeros_like(values)
    out[..., 1:] = values[..., :0:-1]
    return out


def mehler_values(values: np.ndarray, grid: GridSpec, hbar: float, tau: float, guard_fraction: float = 0.8) -> np.ndarray:
    """Harmonic oscillator evolution by its closed-form kernel.

    Times beyond the first focal time are reduced with
    ``U(tau) = U(tau - m pi) U(m pi)`` and ``U(m pi) f = exp(-i m pi/2) f((-1)^m x)``.
    """
    if grid.dim != 1:
        raise ValueError("the harmonic kernel is implemented in one dimension")
    sn = np.sin(tau)
    if abs(sn) <= FOCAL_MARGIN:
        raise FocalTimeError(
            f"|sin tau| = {abs(sn):.3g} <= {FOCAL_MARGIN}: too close to a focal time",
            tau=tau,
        )
    m = int(np.floor(tau / np.pi))
    red = tau - m * np.pi
    vals = np.array(values, dtype=np.complex128)
    if m % 2:
        vals = _reflect(vals)
    vals *= np.exp(-0.5j * np.pi * m)
    sn, cs = np.sin(red), np.cos(red)
    x = grid.axis
    L = grid.half_width
    ratio = grid.dx * L * (1 + abs(cs)) / (sn * hbar)
    bound = guard_fraction * 2 * np.pi
    if ratio > bound:
        need = int(2 ** np.ceil(np.log2(grid.n * ratio / bound)))
        raise ResolutionError(
            f"harmonic kernel unresolved at tau = {tau:.6g}, hbar = {hbar:.6g}; use n >= {need}",
            ratio=ratio, bound=bound, required_n=need,
        )
    pref = (2 * np.pi * hbar * sn) ** -0.5 * np.exp(-0.25j * np.pi) * grid.dx
    Ft = np.atleast_2d(vals).T
    out = np.empty((grid.n, Ft.shape[1]), np.complex128)
    block = 512
    for r0 in range(0, grid.n, block):
        xr = x[r0:r0 + block, None]
        K = np.exp((1j / (2 * hbar * sn)) * ((xr**2 + x[None, :] ** 2) * cs - 2 * xr * x[None, :]))
        out[r0:r0 + block] = K @ Ft
    out *= pref
    return out[:, 0] if vals.ndim == 1 else out.T


def mehler_propagator(f: WaveFunction, hbar: float, tau: float) -> WaveFunction:
    """Harmonic oscillator ``V = x^2/2`` evolution over time ``tau``.

    Raises
    ------
    FocalTimeError
        If ``|sin tau| <= 0.05``.
    ResolutionError
        If the kernel's phase is not resolved by the grid.
    """
    return f.with_values(mehler_values(f.values, f.grid, hbar, tau))


def split_step_values(
    pot: PotentialModel,
    values: np.ndarray,
    grid: GridSpec,
    hbar: float,
    s: float,
    t: float,
    nsteps: int,
) -> np.ndarray:
    """Strang splitting with ``nsteps`` equal steps (potential half steps outside)."""
    if grid.dim != 1:
        raise ValueError("split-step reference is implemented in one dimension")
    if nsteps < 1:
        raise ValueError("nsteps must be >= 1")
    dt = (t - s) / nsteps
    x = grid.axis
    if pot.label == "free":
        return free_values(values, grid, hbar, t - s)
    Vs = pot.V(s, x)
    spread = float(np.ptp(Vs))
    if pot.time_dependent:
        spread = max(spread, float(np.ptp(pot.V(t, x))))
    if spread * abs(dt) / hbar >= SPLIT_PHASE_LIMIT:
        need = int(np.ceil(spread * abs(t - s) / (hbar * SPLIT_PHASE_LIMIT))) + 1
        raise GuardError(
            f"potential phase per step {spread * abs(dt) / hbar:.3f} >= pi/4; use nsteps >= {need}",
            required_nsteps=need,
        )
    kin = np.exp(-0.5j * hbar * dt * grid.fft_freqs**2)
    u = np.array(values, dtype=np.complex128)
    if not pot.time_dependent:
        half = np.exp(-0.5j * dt * Vs / hbar)
        full = half * half
        u = u * half
        for k in range(nsteps):
            u = np.fft.ifft(np.fft.fft(u, axis=-1) * kin, axis=-1)
            u *= full if k < nsteps - 1 else half
        return u
    for k in range(nsteps):
        half = np.exp(-0.5j * dt * pot.V(s + (k + 0.5) * dt, x) / hbar)
        u = half * np.fft.ifft(np.fft.fft(half * u, axis=-1) * kin, axis=-1)
    return u


def split_step_reference(
    pot: PotentialModel,
    f: WaveFunction,
    hbar: float,
    s: float,
    t: float,
    nsteps: int,
) -> WaveFunction:
    """Second-order Strang splitting ``e^{-iV dt/2h} e^{i h dt Lap/2} e^{-iV dt/2h}``.

    Raises
    ------
    GuardError
        If the potential phase per step reaches ``pi/4``.
    """
    return f.with_values(split_step_values(pot, f.values, f.grid, hbar, s, t, nsteps))


def _rel_gap(a: np.ndarray, b: np.ndarray, grid: GridSpec) -> float:
    return float(np.max(lp_norms(a - b, grid, 2) / lp_norms(b, grid, 2)))


def exact_values(
    pot: PotentialModel,
    values: np.ndarray,
    grid: GridSpec,
    hbar: float,
    s: float,
    t: float,
    tol: float = 1e-8,
    extrapolate: bool = True,
    max_steps: int = 2**18,
) -> tuple[np.ndarray, float, str]:
    """Dispatching reference solver.

    Returns
    -------
    values : ndarray
    accuracy : float
        Estimated relative ``L^2`` error.
    method : str
        ``free``, ``mehler`` or ``split-step``.
    """
    tau = t - s
    if pot.label == "free" and not pot.time_dependent:
        return free_values(values, grid, hbar, tau), CLOSED_FORM_ACCURACY, "free"
    if pot.label == "harmonic" and not pot.time_dependent:
        try:
            return mehler_values(values, grid, hbar, tau), CLOSED_FORM_ACCURACY, "mehler"
        except (FocalTimeError, ResolutionError):
            pass
    spread = float(np.ptp(pot.V(s, grid.axis)))
    if pot.time_dependent:
        spread = max(spread, float(np.ptp(pot.V(t, grid.axis))))
    n = max(64, int(np.ceil(spread * abs(tau) / (hbar * SPLIT_PHASE_LIMIT))) + 1)
    prev = split_step_values(pot, values, grid, hbar, s, t, n)
    prev_x = None
    while 2 * n <= max_steps:
        n *= 2
        cur = split_step_values(pot, values, grid, hbar, s, t, n)
        if extrapolate:
            ext = (4 * cur - prev) / 3
            if prev_x is not None:
                gap = _rel_gap(ext, prev_x, grid)
                if gap < tol:
                    return ext, gap, "split-step"
            prev_x = ext
        else:
            gap = _rel_gap(cur, prev, grid)
            if gap < tol:
                return cur, gap / 3, "split-step"
        prev = cur
    raise GuardError(f"split-step reference not self-consistent to {tol:g} within {max_steps} steps")


def exact_propagator(
    pot: PotentialModel,
    f: WaveFunction,
    hbar: float,
    s: float,
    t: float,
    tol: float = 1e-8,
) -> WaveFunction:
    """Reference evolution from ``s`` to ``t``.

    Uses the free multiplier or the harmonic kernel when they apply and the
    harmonic kernel is resolved away from focal times; otherwise step-doubled
    Strang splitting with Richardson extrapolation, refined until successive
    extrapolants agree to ``tol``.
    """
    vals, _, _ = exact_values(pot, f.values, f.grid, hbar, s, t, tol)
    return f.with_values(vals)
