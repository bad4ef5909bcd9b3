"""Hamiltonian flow, two-point boundary problems and generating-function tables.

Everything here is one-dimensional: ``H(t, x, xi) = xi^2/2 + V(t, x)``.
Trajectories are integrated with classical RK4; the first variational
equations ride along when a Jacobian is needed.
"""

from __future__ import annotations

import csv
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from numba import njit, prange
from scipy.integrate import simpson

from .exceptions import CausticError, IntegrationError
from .grid import fmt

#: Default RK4 step count for single trajectories.
DEFAULT_NSTEPS = 200
#: ``|dx/deta| < SINGULAR_TOL * (t - s)`` flags a caustic.
SINGULAR_TOL = 1e-6


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True, eq=False)
class PotentialModel:
    """Evaluators for ``V(t, x)`` and its first two ``x``-derivatives.

    Parameters
    ----------
    label : str
        ``free``, ``harmonic``, ``quadratic-plus-bounded``,
        ``modulated-harmonic`` or ``custom``.
    V, grad_V, hess_V : callable
        Vectorized functions of ``(t, x)``.
    bounds : dict
        Declared bounds ``{2: C2, 3: C3}`` on ``|d^2V|`` and ``|d^3V|``.
    time_dependent : bool
    params : tuple
        Numeric parameters; together with ``label`` they form the cache key.
    kind : int
        Index of the compiled force law used by the table kernel, ``-1`` for
        potentials that only have Python evaluators.
    even : bool
        Whether ``V(t, -x) = V(t, x)``.
    """

    label: str
    V: Callable
    grad_V: Callable
    hess_V: Callable
    bounds: dict = field(default_factory=dict)
    time_dependent: bool = False
    params: tuple = ()
    kind: int = -1
    even: bool = False

    @property
    def key(self) -> tuple:
        if self.kind < 0:
            return (self.label, id(self))
        return (self.label, self.params)

    @property
    def is_quadratic(self) -> bool:
        return self.label in ("free", "harmonic") and not self.time_dependent

    def check_assumption_a(
        self,
        lattice: np.ndarray | None = None,
        times: tuple[float, ...] = (0.0,),
        h: float = 1e-3,
    ) -> dict:
        """Spot-check the declared bounds on second and third derivatives.

        Derivatives are finite differences of ``grad_V`` on ``lattice``
        (default: 401 points in ``[-20, 20]``).

        Returns
        -------
        dict
            Observed maxima per order, the declared bounds and ``passed``.
        """
        xs = np.linspace(-20, 20, 401) if lattice is None else np.asarray(lattice, float)
        obs = {2: 0.0, 3: 0.0}
        for t in times:
            d2 = (self.grad_V(t, xs + h) - self.grad_V(t, xs - h)) / (2 * h)
            d3 = (self.grad_V(t, xs + h) - 2 * self.grad_V(t, xs) + self.grad_V(t, xs - h)) / h**2
            obs[2] = max(obs[2], float(np.max(np.abs(d2))))
            obs[3] = max(obs[3], float(np.max(np.abs(d3))))
        # finite differences carry O(h^2) error; allow a matching slack
        passed = all(obs[k] <= self.bounds.get(k, np.inf) * (1 + 1e-4) + 1e-6 for k in obs)
        return {"observed": obs, "declared": dict(self.bounds), "passed": passed}

    def energy(self, t: float, x, p):
        return 0.5 * np.asarray(p) ** 2 + self.V(t, np.asarray(x))

    def closed_form(self, tau: float, x, y):
        """Action, initial and final momentum for ``free``/``harmonic``.

        Returns
        -------
        S, eta, xi : ndarray
        """
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        if self.label == "free" and not self.time_dependent:
            v = (x - y) / tau
            return 0.5 * (x - y) ** 2 / tau, v, v
        if self.label == "harmonic" and not self.time_dependent:
            sn, cs = np.sin(tau), np.cos(tau)
            S = ((x**2 + y**2) * cs - 2 * x * y) / (2 * sn)
            return S, (x - y * cs) / sn, (x * cs - y) / sn
        raise ValueError(f"no closed form for potential {self.label!r}")


def free() -> PotentialModel:
    """``V = 0``."""
    z = lambda t, x: np.zeros_like(np.asarray(x, float))
    return PotentialModel("free", z, z, z, {2: 0.0, 3: 0.0}, kind=0, even=True)


def harmonic() -> PotentialModel:
    """``V = x^2/2``."""
    return PotentialModel(
        "harmonic",
        lambda t, x: 0.5 * np.asarray(x, float) ** 2,
        lambda t, x: np.asarray(x, float) * 1.0,
        lambda t, x: np.ones_like(np.asarray(x, float)),
        {2: 1.0, 3: 0.0},
        kind=1,
        even=True,
    )


def anharmonic(a: float = 0.2) -> PotentialModel:
    """``V = x^2/2 + a cos x``: quadratic growth plus a bounded smooth term."""
    return PotentialModel(
        "quadratic-plus-bounded",
        lambda t, x: 0.5 * np.asarray(x, float) ** 2 + a * np.cos(x),
        lambda t, x: np.asarray(x, float) - a * np.sin(x),
        lambda t, x: 1.0 - a * np.cos(x),
        {2: 1.0 + abs(a), 3: abs(a)},
        params=(float(a),),
        kind=2,
        even=True,
    )


def modulated_harmonic(eps: float = 0.1) -> PotentialModel:
    """``V = x^2/2 (1 + eps sin t)``."""
    return PotentialModel(
        "modulated-harmonic",
        lambda t, x: 0.5 * (1 + eps * np.sin(t)) * np.asarray(x, float) ** 2,
        lambda t, x: (1 + eps * np.sin(t)) * np.asarray(x, float),
        lambda t, x: (1 + eps * np.sin(t)) * np.ones_like(np.asarray(x, float)),
        {2: 1.0 + abs(eps), 3: 0.0},
        time_dependent=True,
        params=(float(eps),),
        kind=3,
        even=True,
    )


def custom(V, grad_V, hess_V, bounds: dict, time_dependent: bool = True, even: bool = False) -> PotentialModel:
    """Wrap user evaluators; tables fall back to the vectorized numpy solver."""
    return PotentialModel("custom", V, grad_V, hess_V, dict(bounds), time_dependent, even=even)


_BUILTINS = {
    "free": free,
    "harmonic": harmonic,
    "anharmonic": anharmonic,
    "quadratic-plus-bounded": anharmonic,
    "modulated-harmonic": modulated_harmonic,
}


def potential_from_name(name: str, **params) -> PotentialModel:
    """Look up a built-in potential by name."""
    try:
        return _BUILTINS[name](**params)
    except KeyError:
        raise ValueError(f"unknown potential {name!r}; choose from {sorted(_BUILTINS)}") from None


# ---------------------------------------------------------------------------
# numpy RK4 for trajectories


@dataclass(frozen=True)
class FlowPoint:
    """Phase-space point ``(x, xi)``; entries may be arrays of equal shape."""

    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.xi))):
            raise ValueError("flow point must be finite")


@dataclass(frozen=True)
class Trajectory:
    """Classical path from ``(s, y)`` to ``(t, x)`` sampled at RK4 nodes."""

    times: np.ndarray
    positions: np.ndarray
    momenta: np.ndarray
    s: float
    t: float
    y: float
    x: float
    eta: float

    @property
    def endpoint_error(self) -> float:
        return float(abs(self.positions[-1] - self.x))


def _integrate(pot, s, t, y, eta, nsteps, jacobian=False, store=False):
    """Vectorized RK4 for ``(x, p)`` and optionally the 2x2 variational matrix."""
    if nsteps < 1:
        raise ValueError("nsteps must be >= 1")
    h = (t - s) / nsteps
    x = np.array(y, dtype=float, copy=True)
    p = np.array(eta, dtype=float, copy=True)
    x, p = np.broadcast_arrays(x, p)
    x, p = x.copy(), p.copy()
    J = [np.ones_like(x), np.zeros_like(x), np.zeros_like(x), np.ones_like(x)] if jacobian else None

    def rhs(tk, x, p, J):
        dp = -pot.grad_V(tk, x)
        if J is None:
            return p, dp, None
        c = pot.hess_V(tk, x)
        return p, dp, [J[2], J[3], -c * J[0], -c * J[1]]

    path_x, path_p = ([x.copy()], [p.copy()]) if store else (None, None)
    for k in range(nsteps):
        tk = s + k * h
        k1 = rhs(tk, x, p, J)
        a2 = None if J is None else [J[i] + 0.5 * h * k1[2][i] for i in range(4)]
        k2 = rhs(tk + 0.5 * h, x + 0.5 * h * k1[0], p + 0.5 * h * k1[1], a2)
        a3 = None if J is None else [J[i] + 0.5 * h * k2[2][i] for i in range(4)]
        k3 = rhs(tk + 0.5 * h, x + 0.5 * h * k2[0], p + 0.5 * h * k2[1], a3)
        a4 = None if J is None else [J[i] + h * k3[2][i] for i in range(4)]
        k4 = rhs(tk + h, x + h * k3[0], p + h * k3[1], a4)
        x = x + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        p = p + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if J is not None:
            J = [J[i] + h / 6 * (k1[2][i] + 2 * k2[2][i] + 2 * k3[2][i] + k4[2][i]) for i in range(4)]
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
            raise IntegrationError(f"flow blew up at tau = {tk + h:.6g}", tau=tk + h)
        if store:
            path_x.append(x.copy())
            path_p.append(p.copy())
    return x, p, J, path_x, path_p


def hamiltonian_flow(pot: PotentialModel, s: float, t: float, y, eta, nsteps: int = DEFAULT_NSTEPS) -> FlowPoint:
    """Integrate ``x' = xi, xi' = -V_x(t, x)`` from ``(y, eta)`` at ``s`` to ``t``.

    ``y`` and ``eta`` may be arrays; the result has their broadcast shape.

    Raises
    ------
    IntegrationError
        On a non-finite state, reporting the time at which it appeared.
    """
    x, p, _, _, _ = _integrate(pot, s, t, y, eta, nsteps)
    return FlowPoint(x, p)


def flow_jacobian(pot: PotentialModel, s: float, t: float, y, eta, nsteps: int = DEFAULT_NSTEPS) -> np.ndarray:
    """``d(x, xi)/d(y, eta)`` from the first variational equations.

    Returns
    -------
    ndarray
        Shape ``(..., 2, 2)``.
    """
    _, _, J, _, _ = _integrate(pot, s, t, y, eta, nsteps, jacobian=True)
    return np.stack([np.stack([J[0], J[1]], -1), np.stack([J[2], J[3]], -1)], -2)


def classical_bvp(
    pot: PotentialModel,
    s: float,
    t: float,
    y: float,
    x: float,
    tol: float = 1e-10,
    nsteps: int = DEFAULT_NSTEPS,
    max_iter: int = 50,
    short_time_bound: float | None = None,
) -> Trajectory:
    """Shoot from ``(s, y)`` to hit ``x`` at time ``t``.

    Newton iteration on the initial momentum starting from ``(x - y)/(t - s)``.

    Raises
    ------
    CausticError
        When ``dx/deta`` is singular, Newton fails to converge, or ``t - s``
        exceeds ``short_time_bound``.
    """
    tau = t - s
    if not tau > 0:
        raise ValueError("classical_bvp needs t > s")
    if short_time_bound is not None and tau >= short_time_bound:
        raise CausticError(
            f"short-time threshold exceeded: t - s = {tau:.6g} >= {short_time_bound:.6g}",
            tau=tau,
        )
    eta = (x - y) / tau
    for _ in range(max_iter):
        xe, _, J, _, _ = _integrate(pot, s, t, y, eta, nsteps, jacobian=True)
        r = float(xe - x)
        if abs(r) <= tol:
            break
        jx = float(J[1])
        if abs(jx) < SINGULAR_TOL * tau:
            raise CausticError(
                f"short-time threshold exceeded: dx/deta = {jx:.3e} is singular "
                f"for (y, x) = ({y:.6g}, {x:.6g}), t - s = {tau:.6g}",
                y=y, x=x, tau=tau,
            )
        eta -= r / jx
    else:
        raise CausticError(
            f"short-time threshold exceeded: shooting did not converge for (y, x) = ({y:.6g}, {x:.6g})",
            y=y, x=x, tau=tau,
        )
    # one more check on the Jacobian of the converged shot
    _, _, J, _, _ = _integrate(pot, s, t, y, eta, nsteps, jacobian=True)
    if abs(float(J[1])) < SINGULAR_TOL * tau:
        raise CausticError(
            f"short-time threshold exceeded: dx/deta = {float(J[1]):.3e} is singular at t - s = {tau:.6g}",
            y=y, x=x, tau=tau,
        )
    _, _, _, px, pp = _integrate(pot, s, t, y, eta, nsteps, store=True)
    times = s + (t - s) * np.arange(nsteps + 1) / nsteps
    return Trajectory(times, np.array(px, float), np.array(pp, float), s, t, y, x, float(eta))


def action_integral(pot: PotentialModel, traj: Trajectory) -> float:
    """Composite Simpson quadrature of ``xi^2/2 - V`` along the stored path."""
    lag = 0.5 * traj.momenta**2 - np.array([pot.V(tk, xk) for tk, xk in zip(traj.times, traj.positions)])
    return float(simpson(lag, x=traj.times))


# ---------------------------------------------------------------------------
# compiled table kernel for built-in potentials


@njit(cache=True, inline="always")
def _force(kind, t, x, prm):
    if kind == 0:
        return 0.0
    if kind == 1:
        return -x
    if kind == 2:
        return -(x - prm[0] * np.sin(x))
    return -(1.0 + prm[0] * np.sin(t)) * x


@njit(cache=True, inline="always")
def _curvature(kind, t, x, prm):
    if kind == 0:
        return 0.0
    if kind == 1:
        return 1.0
    if kind == 2:
        return 1.0 - prm[0] * np.cos(x)
    return 1.0 + prm[0] * np.sin(t)


@njit(cache=True, inline="always")
def _virial(kind, t, x, prm):
    # x V_x / 2 - V, zero for homogeneous quadratic potentials
    if kind == 2:
        return -0.5 * prm[0] * x * np.sin(x) - prm[0] * np.cos(x)
    return 0.0


@njit(cache=True)
def _shoot(kind, prm, s, tau, y, eta, nsteps):
    h = tau / nsteps
    x = y
    p = eta
    jx = 0.0
    jp = 1.0
    acc = _virial(kind, s, x, prm)
    for k in range(nsteps):
        t0 = s + k * h
        tm = t0 + 0.5 * h
        t1 = t0 + h
        k1x = p
        k1p = _force(kind, t0, x, prm)
        k1a = jp
        k1b = -_curvature(kind, t0, x, prm) * jx
        x2 = x + 0.5 * h * k1x
        p2 = p + 0.5 * h * k1p
        a2 = jx + 0.5 * h * k1a
        b2 = jp + 0.5 * h * k1b
        k2x = p2
        k2p = _force(kind, tm, x2, prm)
        k2a = b2
        k2b = -_curvature(kind, tm, x2, prm) * a2
        x3 = x + 0.5 * h * k2x
        p3 = p + 0.5 * h * k2p
        a3 = jx + 0.5 * h * k2a
        b3 = jp + 0.5 * h * k2b
        k3x = p3
        k3p = _force(kind, tm, x3, prm)
        k3a = b3
        k3b = -_curvature(kind, tm, x3, prm) * a3
        x4 = x + h * k3x
        p4 = p + h * k3p
        a4 = jx + h * k3a
        b4 = jp + h * k3b
        k4x = p4
        k4p = _force(kind, t1, x4, prm)
        k4a = b4
        k4b = -_curvature(kind, t1, x4, prm) * a4
        x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        jx += h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
        jp += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
        if k == nsteps - 1:
            w = 1.0
        elif k % 2 == 0:
            w = 4.0
        else:
            w = 2.0
        acc += w * _virial(kind, t1, x, prm)
    return x, p, jx, jp, acc * h / 3.0


@njit(cache=True, parallel=True)
def _table_kernel(kind, prm, s, tau, xs, ys, nsteps, tol, max_iter, symmetric, S, ETA, XI, CONV):
    n = xs.size
    m = ys.size
    for i in prange(n):
        X = xs[i]
        j0 = i if symmetric else 0
        d1 = 0.0
        d2 = 0.0
        d3 = 0.0
        nprev = 0
        for j in range(j0, m):
            y = ys[j]
            # continuation along the row: extrapolate the deviation from a straight line
            if nprev >= 3:
                d = 3.0 * d1 - 3.0 * d2 + d3
            elif nprev == 2:
                d = 2.0 * d1 - d2
            elif nprev == 1:
                d = d1
            else:
                d = 0.0
            eta = (X - y) / tau + d
            ok = False
            x = 0.0
            p = 0.0
            jx = 1.0
            jp = 0.0
            integ = 0.0
            for _ in range(max_iter):
                x, p, jx, jp, integ = _shoot(kind, prm, s, tau, y, eta, nsteps)
                if not (np.isfinite(x) and np.isfinite(p) and np.isfinite(jx)):
                    break
                if abs(jx) < 1e-6 * tau:
                    break
                r = x - X
                if abs(r) <= tol:
                    ok = True
                    break
                eta -= r / jx
            if ok:
                # first-order move of the endpoint onto X (exact to O(r^2))
                dxe = X - x
                S[i, j] = 0.5 * (p * x - eta * y) + integ + p * dxe
                XI[i, j] = p + dxe * jp / jx
                ETA[i, j] = eta + dxe / jx
                d3 = d2
                d2 = d1
                d1 = ETA[i, j] - (X - y) / tau
                nprev = min(nprev + 1, 3)
            else:
                S[i, j] = np.nan
                XI[i, j] = np.nan
                ETA[i, j] = np.nan
                nprev = 0
            CONV[i, j] = ok
    if symmetric:
        # time reversal: the path y -> x read backwards is the path x -> y
        for i in prange(n):
            for j in range(i):
                S[i, j] = S[j, i]
                ETA[i, j] = -XI[j, i]
                XI[i, j] = -ETA[j, i]
                CONV[i, j] = CONV[j, i]


def _table_numpy(pot, s, tau, xs, ys, nsteps, tol, max_iter):
    """Vectorized Newton over all pairs for potentials without a compiled kernel."""
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    eta = (X - Y) / tau
    done = np.zeros(X.shape, bool)
    for _ in range(max_iter):
        xe, pe, J, _, _ = _integrate(pot, s, s + tau, Y, eta, nsteps, jacobian=True)
        r = xe - X
        done = np.abs(r) <= tol
        if done.all():
            break
        jx = np.where(np.abs(J[1]) < SINGULAR_TOL * tau, np.nan, J[1])
        eta = np.where(done, eta, eta - r / jx)
    xe, pe, J, px, pp = _integrate(pot, s, s + tau, Y, eta, nsteps, jacobian=True, store=True)
    times = s + tau * np.arange(nsteps + 1) / nsteps
    lag = np.stack([0.5 * pk**2 - pot.V(tk, xk) for tk, xk, pk in zip(times, px, pp)])
    S = simpson(lag, x=times, axis=0)
    dxe = X - xe
    conv = np.isfinite(S) & (np.abs(dxe) <= tol) & (np.abs(J[1]) >= SINGULAR_TOL * tau)
    S = S + pe * dxe
    XI = pe + dxe * J[3] / J[1]
    ETA = eta + dxe / J[1]
    return S, ETA, XI, conv


# ---------------------------------------------------------------------------
# generating table


def _second_difference(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    a = np.moveaxis(a, axis, 0)
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - 2 * a[1:-1] + a[:-2]) / h**2
    out[0] = (2 * a[0] - 5 * a[1] + 4 * a[2] - a[3]) / h**2
    out[-1] = (2 * a[-1] - 5 * a[-2] + 4 * a[-3] - a[-4]) / h**2
    return np.moveaxis(out, 0, axis)


@dataclass(frozen=True, eq=False)
class GeneratingTable:
    """Action ``S(t, s, x, y)`` on a product grid with its Hessian blocks.

    Attributes
    ----------
    S : ndarray
        Action, indexed ``[i, j]`` for ``(x_axis[i], y_axis[j])``.
    eta : ndarray
        Initial momentum of the connecting path (``-dS/dy``).
    xi : ndarray
        Final momentum of the connecting path (``dS/dx``).
    converged : ndarray of bool
        Per-entry shooting convergence flags.
    """

    s: float
    t: float
    x_axis: np.ndarray
    y_axis: np.ndarray
    S: np.ndarray
    eta: np.ndarray
    xi: np.ndarray
    converged: np.ndarray
    nsteps: int = 0
    method: str = "bvp"

    @property
    def tau(self) -> float:
        return self.t - self.s

    @property
    def nbytes(self) -> int:
        return self.S.nbytes + self.eta.nbytes + self.xi.nbytes + self.converged.nbytes

    @property
    def dx(self) -> float:
        return float(self.x_axis[1] - self.x_axis[0])

    @property
    def dy(self) -> float:
        return float(self.y_axis[1] - self.y_axis[0])

    @cached_property
    def S_xx(self) -> np.ndarray:
        return _second_difference(self.S, self.dx, 0)

    @cached_property
    def S_yy(self) -> np.ndarray:
        return _second_difference(self.S, self.dy, 1)

    @cached_property
    def S_xy(self) -> np.ndarray:
        return np.gradient(np.gradient(self.S, self.dx, axis=0, edge_order=2), self.dy, axis=1, edge_order=2)

    def mixed_symmetry_error(self) -> float:
        """Max gap between x-then-y and y-then-x mixed differences."""
        other = np.gradient(np.gradient(self.S, self.dy, axis=1, edge_order=2), self.dx, axis=0, edge_order=2)
        return float(np.max(np.abs(other - self.S_xy)))

    def generating_identity_errors(self, interior: int = 1) -> dict:
        """Max deviation of ``dS/dx - xi`` and ``dS/dy + eta`` on interior nodes."""
        sl = np.s_[interior:-interior, interior:-interior] if interior else np.s_[:, :]
        dSx = np.gradient(self.S, self.dx, axis=0, edge_order=2)
        dSy = np.gradient(self.S, self.dy, axis=1, edge_order=2)
        return {
            "dSdx_minus_xi": float(np.max(np.abs(dSx - self.xi)[sl])),
            "dSdy_plus_eta": float(np.max(np.abs(dSy + self.eta)[sl])),
        }

    def to_csv(self, path) -> None:
        """Write ``x, y, S, Sxx, Sxy, Syy, converged`` rows."""
        Sxx, Sxy, Syy = self.S_xx, self.S_xy, self.S_yy
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "S", "Sxx", "Sxy", "Syy", "converged"])
            for i, xv in enumerate(self.x_axis):
                for j, yv in enumerate(self.y_axis):
                    w.writerow([
                        fmt(xv), fmt(yv), fmt(self.S[i, j]), fmt(Sxx[i, j]),
                        fmt(Sxy[i, j]), fmt(Syy[i, j]), int(self.converged[i, j]),
                    ])


def default_table_steps(tau: float, span: float = 0.0) -> int:
    """Even RK4 step count for a table.

    The step is at most 1/80 in time, and a path crossing the full ``span``
    of the table moves at most 2/3 of a length unit per step.
    """
    return max(4, 2 * int(np.ceil(40.0 * abs(tau))), 2 * int(np.ceil(0.75 * span)))


_TABLE_CACHE: OrderedDict = OrderedDict()
#: Byte budget of the table cache; the newest table is always kept.
_TABLE_CACHE_BYTES = 1_500_000_000


def clear_table_cache() -> None:
    _TABLE_CACHE.clear()


def generating_table(
    pot: PotentialModel,
    s: float,
    t: float,
    x_axis: np.ndarray,
    y_axis: np.ndarray,
    tol: float = 1e-9,
    nsteps: int | None = None,
    method: str = "bvp",
    short_time_bound: float | None = None,
    cache: bool = True,
) -> GeneratingTable:
    """Tabulate the action of the connecting path for every ``(x, y)`` pair.

    Parameters
    ----------
    pot : PotentialModel
    s, t : float
        Start and end time, ``t > s``.
    x_axis, y_axis : ndarray
        Uniform axes.
    tol : float
        Shooting tolerance on the endpoint. The converged shot is moved onto
        the exact endpoint to first order, so ``S`` is accurate to ``O(tol^2)``.
    nsteps : int, optional
        Even RK4 step count (default :func:`default_table_steps`).
    method : {"bvp", "closed-form"}
        ``closed-form`` is available for the free and harmonic potentials.
    short_time_bound : float, optional
        Refuse ``t - s`` at or above this bound.
    cache : bool
        Reuse the last tables built with identical arguments.

    Raises
    ------
    CausticError
        If any pair fails to converge; the first offending pair is named.
    """
    tau = float(t - s)
    if not tau > 0:
        raise ValueError("generating_table needs t > s")
    if short_time_bound is not None and tau >= short_time_bound:
        raise CausticError(f"short-time threshold exceeded: t - s = {tau:.6g}", tau=tau)
    xs = np.ascontiguousarray(x_axis, dtype=float)
    ys = np.ascontiguousarray(y_axis, dtype=float)
    if nsteps is None:
        span = max(xs.max(), ys.max()) - min(xs.min(), ys.min())
        nsteps = default_table_steps(tau, span)
    nsteps = int(nsteps)
    if method == "bvp" and nsteps % 2:
        nsteps += 1
    tkey = (round(tau, 13),) if not pot.time_dependent else (round(s, 13), round(t, 13))
    key = (pot.key, tkey, xs.size, xs[0], xs[-1], ys.size, ys[0], ys[-1], tol, nsteps, method)
    if cache and key in _TABLE_CACHE:
        _TABLE_CACHE.move_to_end(key)
        hit = _TABLE_CACHE[key]
        if hit.s == s:
            return hit
        return GeneratingTable(s, t, hit.x_axis, hit.y_axis, hit.S, hit.eta, hit.xi, hit.converged, nsteps, method)

    if method == "closed-form":
        S, eta, xi = pot.closed_form(tau, xs[:, None], ys[None, :])
        conv = np.ones(S.shape, bool)
    elif method == "bvp":
        if pot.kind >= 0:
            shape = (xs.size, ys.size)
            S, eta, xi = np.empty(shape), np.empty(shape), np.empty(shape)
            conv = np.empty(shape, np.bool_)
            symmetric = (not pot.time_dependent) and xs.size == ys.size and np.array_equal(xs, ys)
            prm = np.array(pot.params if pot.params else (0.0,), float)
            _table_kernel(pot.kind, prm, float(s), tau, xs, ys, nsteps, tol, 50, symmetric, S, eta, xi, conv)
        else:
            S, eta, xi, conv = _table_numpy(pot, float(s), tau, xs, ys, nsteps, tol, 50)
    else:
        raise ValueError(f"unknown table method {method!r}")

    if not conv.all():
        i, j = np.argwhere(~conv)[0]
        raise CausticError(
            f"short-time threshold exceeded: shooting failed at (x, y) = "
            f"({xs[i]:.6g}, {ys[j]:.6g}) for t - s = {tau:.6g}",
            x=float(xs[i]), y=float(ys[j]), tau=tau,
        )
    table = GeneratingTable(float(s), float(t), xs, ys, S, eta, xi, conv, nsteps, method)
    if cache:
        _TABLE_CACHE[key] = table
        while len(_TABLE_CACHE) > 1 and sum(tb.nbytes for tb in _TABLE_CACHE.values()) > _TABLE_CACHE_BYTES:
            _TABLE_CACHE.popitem(last=False)
    return table


@dataclass(frozen=True)
class TamenessReport:
    """Scaled Hessian bounds of a generating table."""

    max_tau_Sxx: float
    max_tau_Sxy: float
    max_tau_Syy: float
    min_tau_det_Syy: float
    threshold: float
    all_converged: bool

    @property
    def passed(self) -> bool:
        return self.all_converged and self.min_tau_det_Syy >= self.threshold

    def as_dict(self) -> dict:
        return {
            "max_tau_Sxx": self.max_tau_Sxx,
            "max_tau_Sxy": self.max_tau_Sxy,
            "max_tau_Syy": self.max_tau_Syy,
            "min_tau_det_Syy": self.min_tau_det_Syy,
            "threshold": self.threshold,
            "all_converged": self.all_converged,
            "passed": self.passed,
        }


def tameness_report(table: GeneratingTable, threshold: float = 0.1) -> TamenessReport:
    """Report ``|t-s|``-scaled maxima of the Hessian blocks and the
    minimum of ``|t-s| |det S_yy|``; passes when that minimum is at least
    ``threshold`` and every entry converged."""
    tau = abs(table.tau)
    return TamenessReport(
        float(np.max(np.abs(tau * table.S_xx))),
        float(np.max(np.abs(tau * table.S_xy))),
        float(np.max(np.abs(tau * table.S_yy))),
        float(np.min(np.abs(tau * table.S_yy))),
        threshold,
        bool(table.converged.all()),
    )


def hamilton_jacobi_residual(
    pot: PotentialModel,
    s: float,
    t: float,
    x_axis: np.ndarray,
    y_axis: np.ndarray,
    dt: float = 1e-4,
    nsteps: int | None = None,
) -> np.ndarray:
    """``|S_t + (S_x)^2/2 + V(t, x)|`` on interior nodes.

    ``S_t`` is a centered difference over ``t +- dt`` with the RK4 step count
    held fixed; ``S_x`` is a fourth-order centered difference on the table,
    so two nodes are dropped at every edge.
    """
    if nsteps is None:
        xs, ys = np.asarray(x_axis), np.asarray(y_axis)
        nsteps = default_table_steps(t - s, max(xs.max(), ys.max()) - min(xs.min(), ys.min()))
    plus = generating_table(pot, s, t + dt, x_axis, y_axis, nsteps=nsteps, cache=False)
    minus = generating_table(pot, s, t - dt, x_axis, y_axis, nsteps=nsteps, cache=False)
    mid = generating_table(pot, s, t, x_axis, y_axis, nsteps=nsteps, cache=False)
    St = (plus.S - minus.S)[2:-2, 2:-2] / (2 * dt)
    S = mid.S
    Sx = (-S[4:] + 8 * S[3:-1] - 8 * S[1:-3] + S[:-4])[:, 2:-2] / (12 * mid.dx)
    res = St + 0.5 * Sx**2 + pot.V(t, np.asarray(x_axis, float))[2:-2, None]
    return np.abs(res)
