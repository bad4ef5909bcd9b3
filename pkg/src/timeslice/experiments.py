"""Experiment drivers: convergence orders, boundedness, residuals, Gabor reports
and sharpness probes.

Every driver takes an :class:`ExperimentConfig`, returns a report object with
``as_dict()`` (config echo, guard diagnostics, PASS flags) and ``write(out)``
(one CSV per sweep).
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .classical import (
    PotentialModel,
    flow_jacobian,
    generating_table,
    hamiltonian_flow,
    potential_from_name,
    tameness_report,
)
from .exceptions import FitError, GuardError
from .fitting import fit_loglog
from .gabor import (
    CanonicalMap,
    PhaseLattice,
    Window,
    argmax_tracking,
    composition_decay_check,
    decay_fit,
    fio_seminorm,
    gabor_matrix,
    modulation_norms,
    rescaled_flow,
)
from .grid import GridSpec, boundary_mass, fmt, k_exponent, lp_norms, sobolev_norms
from .parametrix import Subdivision, compose_values, nyquist_ratio, residual_values
from .reference import exact_values, mehler_values

#: Errors below this count as the quadrature floor.
EXACT_TOL = 1e-6
#: Half-width of every slope acceptance band.
SLOPE_BAND = 0.3


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    """Parameters shared by all drivers; each driver reads the fields it needs.

    Unknown keys in :meth:`from_dict` are rejected so typos surface early.
    """

    potential: str = "harmonic"
    potential_params: dict = field(default_factory=dict)
    d: int = 1
    n: int = 1024
    box: float = 20.0
    hbars: list = field(default_factory=lambda: [1.0])
    ps: list = field(default_factory=lambda: [2.0])
    orders: list = field(default_factory=lambda: [0])
    s: float = 0.0
    t: float = 1.0
    slices: list = field(default_factory=lambda: [2, 4, 8, 16, 32])
    hbar_slices: int = 8
    taus: list = field(default_factory=lambda: [0.2, 0.4, 0.8])
    family: str = "standard"
    nsteps: int | None = None
    # gabor
    alpha: float = 0.5
    beta: float = 0.5
    radius: float = 8.0
    w_radius: float = 12.0
    m: float = 4.0
    bound: float = 50.0
    gabor_tau: float = float(np.pi / 8)
    checks: list = field(default_factory=lambda: ["sparsity"])
    # residual
    residual_hbar_tau: float = 0.4
    duhamel: bool = True
    duhamel_intervals: int = 8
    duhamel_n: int | None = None
    duhamel_box: float | None = None
    # sharpness
    lambdas: list = field(default_factory=lambda: [4.0, 8.0, 16.0, 32.0])
    dilations: list = field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0])
    k2: float = 0.5
    # run control
    seed: int = 0
    threads: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def validate(self) -> None:
        if self.d != 1:
            raise ValueError("the experiment drivers run in one dimension")
        if self.t <= self.s:
            raise ValueError("need t > s")
        if any(not 0 < h <= 1 for h in self.hbars):
            raise ValueError("every hbar must lie in (0, 1]")
        if any(o not in (0, 1) for o in self.orders):
            raise ValueError("orders must be 0 or 1")
        if any(int(L) < 1 for L in self.slices):
            raise ValueError("slice counts must be positive")
        GridSpec(self.n, self.box)

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.n, self.box)

    @property
    def pot(self) -> PotentialModel:
        return potential_from_name(self.potential, **self.potential_params)

    def as_dict(self) -> dict:
        return asdict(self)


def _map(func: Callable, jobs: list, threads: int) -> list:
    """Ordered map over independent jobs."""
    if threads <= 1 or len(jobs) <= 1:
        return [func(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, jobs))


def _write_rows(path: Path, header: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(r[h]) if isinstance(r[h], float) else r[h] for h in header])


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# test family


def hermite_functions(x: np.ndarray, count: int) -> np.ndarray:
    """Normalized Hermite functions ``h_0 .. h_{count-1}`` by the stable recurrence."""
    out = np.empty((count, x.size))
    out[0] = np.pi**-0.25 * np.exp(-0.5 * x**2)
    if count > 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for k in range(1, count - 1):
        out[k + 1] = np.sqrt(2.0 / (k + 1)) * x * out[k] - np.sqrt(k / (k + 1)) * out[k - 1]
    return out


def test_family(grid: GridSpec, family: str = "standard") -> tuple[list[str], np.ndarray]:
    """Fixed family of ``L^2``-normalized inputs, shape ``(12, n)``.

    Hermite functions ``h_0..h_7``, Gaussians centred at ``x = -2, 2`` and
    Gaussians modulated to ``xi = -2, 2``.
    """
    if family != "standard":
        raise ValueError(f"unknown test family {family!r}")
    x = grid.axis
    names = [f"hermite{k}" for k in range(8)]
    rows = [hermite_functions(x, 8).astype(np.complex128)]
    g = lambda y: np.pi**-0.25 * np.exp(-0.5 * y**2)
    for x0 in (-2.0, 2.0):
        names.append(f"shift{x0:+g}")
        rows.append(g(x - x0)[None].astype(np.complex128))
    for k0 in (-2.0, 2.0):
        names.append(f"mod{k0:+g}")
        rows.append((np.exp(1j * k0 * x) * g(x))[None])
    F = np.concatenate(rows)
    F /= lp_norms(F, grid, 2)[:, None]
    return names, F


test_family.__test__ = False  # keep pytest from collecting it


def _norm_pair(p: float, hbar: float, grid: GridSpec) -> tuple[Callable, Callable]:
    """``(target norm, source norm)`` for the convergence and boundedness ratios.

    ``p <= 2``: ``||.||_p`` over ``||.||_{L^p_k}``; ``p > 2``: ``||.||_{L^p_{-k}}``
    over ``||.||_p``.
    """
    k = k_exponent(p) if p != 2 else 0.0
    lp = lambda v: lp_norms(v, grid, p)
    if p <= 2:
        return lp, lambda v: sobolev_norms(v, grid, p, k, hbar)
    return (lambda v: sobolev_norms(v, grid, p, -k, hbar)), lp


# ---------------------------------------------------------------------------
# convergence


@dataclass
class ConvergenceReport:
    config: dict
    rows: list
    omega_fits: list
    hbar_fits: list
    exact_regime: bool
    diagnostics: dict

    @property
    def passed(self) -> bool:
        if self.exact_regime:
            return all(r["error"] < EXACT_TOL for r in self.rows)
        fits = [f for f in self.omega_fits + self.hbar_fits if f["passed"] is not None]
        return bool(fits) and all(f["passed"] for f in fits)

    def slope(self, kind: str, **match) -> float | None:
        src = self.omega_fits if kind == "omega" else self.hbar_fits
        for f in src:
            if all(f.get(k) == v for k, v in match.items()):
                return f.get("slope")
        return None

    def as_dict(self) -> dict:
        return {"kind": "converge", "passed": self.passed, "exact_regime": self.exact_regime,
                "omega_fits": self.omega_fits, "hbar_fits": self.hbar_fits,
                "diagnostics": self.diagnostics, "config": self.config}

    def write(self, out) -> list[Path]:
        path = Path(out) / "converge.csv"
        _write_rows(path, ["potential", "N", "p", "hbar", "slices", "omega", "error", "error_l2",
                           "reference_accuracy", "reference_method", "valid"], self.rows)
        return [path]


def _fit_record(x, y, target, min_points, **labels) -> dict:
    rec = dict(labels, target=target, band=SLOPE_BAND, exact_regime=False)
    if len(y) and max(y) < EXACT_TOL:
        # at the quadrature floor the slope only measures rounding noise
        rec.update(slope=None, stderr=None, n_points=len(y), passed=True, exact_regime=True,
                   note="all errors below the quadrature floor")
        return rec
    try:
        fit = fit_loglog(x, y, min_points)
    except FitError as err:
        rec.update(slope=None, stderr=None, n_points=int(err.details.get("n_points", 0)), passed=None, note=str(err))
        return rec
    rec.update(fit.as_dict(), passed=fit.within(target, SLOPE_BAND))
    return rec


def run_convergence(config: ExperimentConfig) -> ConvergenceReport:
    """Errors of composed slices against the reference, with fitted orders.

    ``error(hbar, L)`` is the worst ratio over the test family; slopes are
    fitted against the mesh for every ``(hbar, p, N)`` and against ``hbar`` at
    ``config.hbar_slices`` slices. A point enters a fit only when the
    reference accuracy is at most 1% of its relative ``L^2`` error.
    """
    pot, grid = config.pot, config.grid
    _, F = test_family(grid, config.family)
    s, t = config.s, config.t
    opts = {} if config.nsteps is None else {"nsteps": config.nsteps}
    refs = {h: exact_values(pot, F, grid, h, s, t) for h in config.hbars}
    diagnostics: dict[str, Any] = {"input_boundary_mass": boundary_mass(F, grid), "guard_ratio": {}, "reference": {}}
    for h, (_, acc, method) in refs.items():
        diagnostics["reference"][str(h)] = {"accuracy": acc, "method": method}

    jobs = [(h, int(L)) for h in config.hbars for L in config.slices]

    def job(hl):
        h, L = hl
        omega = Subdivision.uniform(s, t, L)
        U = refs[h][0]
        rows = []
        for N in config.orders:
            E = compose_values(pot, omega, h, N, F, grid, **opts)
            diff = E - U
            err2 = float(np.max(lp_norms(diff, grid, 2) / lp_norms(U, grid, 2)))
            for p in config.ps:
                tgt, src = _norm_pair(p, h, grid)
                err = float(np.max(tgt(diff) / src(F)))
                rows.append({"potential": pot.label, "N": N, "p": float(p), "hbar": float(h), "slices": L,
                             "omega": float(omega.gaps.max()), "error": err, "error_l2": err2,
                             "reference_accuracy": float(refs[h][1]), "reference_method": refs[h][2],
                             "valid": bool(refs[h][1] <= 0.01 * err2)})
        tab = generating_table(pot, s, s + (t - s) / L, grid.axis, grid.axis, **opts)
        return rows, nyquist_ratio(tab, h)

    rows = []
    for (h, L), (rs, ratio) in zip(jobs, _map(job, jobs, config.threads)):
        rows.extend(rs)
        diagnostics["guard_ratio"][f"hbar={h:g},L={L}"] = ratio

    exact = all(r["error"] < EXACT_TOL for r in rows)
    omega_fits, hbar_fits = [], []
    for N in config.orders:
        for p in config.ps:
            for h in config.hbars:
                sel = [r for r in rows if r["N"] == N and r["p"] == p and r["hbar"] == h and r["valid"]]
                omega_fits.append(_fit_record([r["omega"] for r in sel], [r["error"] for r in sel],
                                              N + 1.0, 4, N=N, p=float(p), hbar=float(h)))
            sel = [r for r in rows if r["N"] == N and r["p"] == p and r["slices"] == config.hbar_slices and r["valid"]]
            hbar_fits.append(_fit_record([r["hbar"] for r in sel], [r["error"] for r in sel],
                                         float(N), 4, N=N, p=float(p), slices=config.hbar_slices))
    return ConvergenceReport(config.as_dict(), rows, omega_fits, hbar_fits, exact, diagnostics)


# ---------------------------------------------------------------------------
# boundedness


@dataclass
class BoundednessReport:
    config: dict
    rows: list
    checks: list
    diagnostics: dict

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def as_dict(self) -> dict:
        return {"kind": "bounded", "passed": self.passed, "checks": self.checks,
                "diagnostics": self.diagnostics, "config": self.config}

    def write(self, out) -> list[Path]:
        path = Path(out) / "bounded.csv"
        _write_rows(path, ["potential", "p", "tau", "hbar", "ratio", "reference_method"], self.rows)
        return [path]


def run_boundedness(config: ExperimentConfig) -> BoundednessReport:
    """Worst-case norm ratios of the reference evolution over the test family.

    PASS when for every ``(p, tau)`` the ratio at each ``hbar`` is at most
    three times the ratio at ``hbar = 1``, and ratios at ``p = 2`` equal 1
    within ``1e-6``.
    """
    pot, grid = config.pot, config.grid
    _, F = test_family(grid, config.family)
    jobs = [(h, tau) for h in config.hbars for tau in config.taus]

    def job(ht):
        h, tau = ht
        U, acc, method = exact_values(pot, F, grid, h, config.s, config.s + tau)
        out = []
        for p in config.ps:
            tgt, src = _norm_pair(p, h, grid)
            out.append({"potential": pot.label, "p": float(p), "tau": float(tau), "hbar": float(h),
                        "ratio": float(np.max(tgt(U) / src(F))), "reference_method": method,
                        "mass": boundary_mass(U, grid)})
        return out

    rows = [r for rs in _map(job, jobs, config.threads) for r in rs]
    checks = []
    for p in config.ps:
        for tau in config.taus:
            sel = {r["hbar"]: r["ratio"] for r in rows if r["p"] == p and r["tau"] == tau}
            base = sel.get(1.0, max(sel.values()))
            worst = max(sel.values())
            chk = {"p": float(p), "tau": float(tau), "base_ratio": base, "worst_ratio": worst,
                   "passed": bool(worst <= 3 * base)}
            if p == 2:
                dev = max(abs(v - 1) for v in sel.values())
                chk["unitarity_deviation"] = dev
                chk["passed"] = chk["passed"] and dev <= 1e-6
            checks.append(chk)
    diag = {"max_output_boundary_mass": max(r.pop("mass") for r in rows)}
    return BoundednessReport(config.as_dict(), rows, checks, diag)


# ---------------------------------------------------------------------------
# residual scaling


@dataclass
class ResidualReport:
    config: dict
    rows: list
    fits: list
    duhamel: dict | None
    exact_regime: bool

    @property
    def passed(self) -> bool:
        ok = self.duhamel is None or self.duhamel["passed"]
        if self.exact_regime:
            return ok and all(r["residual_l2"] < EXACT_TOL for r in self.rows)
        done = [f for f in self.fits if f["passed"] is not None]
        return ok and bool(done) and all(f["passed"] for f in done)

    def as_dict(self) -> dict:
        return {"kind": "residual", "passed": self.passed, "exact_regime": self.exact_regime,
                "fits": self.fits, "duhamel": self.duhamel, "config": self.config}

    def write(self, out) -> list[Path]:
        path = Path(out) / "residual.csv"
        _write_rows(path, ["tau", "hbar", "N", "residual_l2"], self.rows)
        return [path]


def duhamel_check(
    pot: PotentialModel,
    grid: GridSpec,
    values: np.ndarray,
    hbar: float,
    s: float,
    t: float,
    order: int,
    intervals: int = 8,
) -> dict:
    """Compare ``E(t,s)f - U(t,s)f`` with ``-i/hbar int_s^t U(t,r) G(r,s) f dr``.

    Composite Simpson over ``intervals`` panels; the residual vanishes at
    ``r = s``.
    """
    if intervals % 2:
        raise ValueError("Simpson needs an even number of intervals")
    nodes = np.linspace(s, t, intervals + 1)
    dt = 5e-4
    integrand = np.zeros((nodes.size, grid.n), np.complex128)
    for i, r in enumerate(nodes[1:], start=1):
        G = residual_values(pot, hbar, s, r, order, values, grid, dt=min(dt, 0.2 * (r - s)))
        integrand[i] = G if r == t else exact_values(pot, G, grid, hbar, r, t)[0]
    w = np.ones(nodes.size)
    w[1:-1:2], w[2:-1:2] = 4, 2
    integral = (w[:, None] * integrand).sum(0) * (nodes[1] - nodes[0]) / 3
    rhs = -1j / hbar * integral
    E = compose_values(pot, Subdivision((s, t)), hbar, order, values, grid)
    U = exact_values(pot, values, grid, hbar, s, t)[0]
    lhs = E - U
    err = float(lp_norms(lhs - rhs, grid, 2) / lp_norms(lhs, grid, 2))
    return {"tau": t - s, "hbar": hbar, "N": order, "intervals": intervals, "relative_error": err,
            "passed": bool(err < 5e-3)}


def run_residual_scaling(config: ExperimentConfig) -> ResidualReport:
    """Residual norms ``||G(t,s) f||_2`` for the test family's worst member.

    Sweeps ``tau`` over ``config.taus`` at the largest ``hbar``, and ``hbar``
    over ``config.hbars`` at ``config.residual_hbar_tau``. Expected exponents
    are ``N + 1`` in both; fits need at least three points.
    """
    pot, grid = config.pot, config.grid
    _, F = test_family(grid, config.family)
    s = config.s
    h0 = max(config.hbars)
    # consecutive jobs share tau so the three generating tables stay cached
    tau_h = config.residual_hbar_tau
    jobs = [(tau, h0) for tau in sorted(config.taus, key=lambda v: v == tau_h)]
    jobs += [(tau_h, h) for h in config.hbars if (tau_h, h) not in jobs]

    def job(th):
        tau, h = th
        out = []
        for N in config.orders:
            G = residual_values(pot, h, s, s + tau, N, F, grid)
            out.append({"tau": float(tau), "hbar": float(h), "N": N, "residual_l2": float(np.max(lp_norms(G, grid, 2)))})
        return out

    rows = [r for rs in _map(job, jobs, config.threads) for r in rs]
    exact = all(r["residual_l2"] < EXACT_TOL for r in rows)
    fits = []
    for N in config.orders:
        sel = [r for r in rows if r["N"] == N and r["hbar"] == h0 and r["tau"] in config.taus]
        fits.append(_fit_record([r["tau"] for r in sel], [r["residual_l2"] for r in sel], N + 1.0, 3,
                                N=N, variable="tau", hbar=h0))
        sel = [r for r in rows if r["N"] == N and r["tau"] == config.residual_hbar_tau]
        fits.append(_fit_record([r["hbar"] for r in sel], [r["residual_l2"] for r in sel], N + 1.0, 3,
                                N=N, variable="hbar", tau=config.residual_hbar_tau))
    duh = None
    if config.duhamel:
        # the check needs five tables per quadrature node, so it may run on its own grid
        dgrid = GridSpec(config.duhamel_n or grid.n, config.duhamel_box or grid.half_width)
        f0 = test_family(dgrid, config.family)[1][0]
        duh = duhamel_check(pot, dgrid, f0, h0, s, s + config.residual_hbar_tau, config.orders[0],
                            config.duhamel_intervals)
        duh.update(n=dgrid.n, box=dgrid.half_width)
    return ResidualReport(config.as_dict(), rows, fits, duh, exact)


# ---------------------------------------------------------------------------
# Gabor reports


def _flow_map(pot: PotentialModel, s: float, t: float) -> CanonicalMap:
    return CanonicalMap.from_flow(pot, s, t, nsteps=max(200, int(np.ceil(400 * (t - s)))))


def _slice_operator(pot, tau, hbar, grid, order=0):
    omega = Subdivision((0.0, tau))
    return lambda v: compose_values(pot, omega, hbar, order, v, grid)


def flow_composition_deviation(pot: PotentialModel, s: float, r: float, t: float, nodes: np.ndarray) -> float:
    """``max |chi(t,r) chi(r,s) z - chi(t,s) z|`` over the given nodes."""
    a = _flow_map(pot, r, t).compose(_flow_map(pot, s, r))(nodes)
    b = _flow_map(pot, s, t)(nodes)
    return float(np.max(np.abs(a - b)))


def symplectic_deviation(chi: CanonicalMap, rng: np.random.Generator, count: int = 25, radius: float = 4.0) -> float:
    z = rng.uniform(-radius, radius, size=(count, 2))
    return float(np.max(np.abs(chi.jacobian_det(z) - 1)))


@dataclass
class GaborReport:
    config: dict
    results: dict
    matrices: dict = field(repr=False, default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v.get("passed", True) for v in self.results.values())

    def as_dict(self) -> dict:
        return {"kind": "gabor", "passed": self.passed, "results": self.results, "config": self.config}

    def write(self, out) -> list[Path]:
        paths = []
        for name, (G, chi) in self.matrices.items():
            path = Path(out) / f"gabor_{name}.csv"
            G.to_csv(path, chi)
            paths.append(path)
        return paths


def run_gabor_report(config: ExperimentConfig) -> GaborReport:
    """Gabor-matrix diagnostics for slice operators and references.

    ``config.checks`` selects among ``sparsity`` (decay exponent, seminorm
    stability and arg-max tracking of one harmonic slice), ``composition``
    (three operator pairs), ``flow`` (flow composition and symplecticity),
    ``uniformity`` (seminorm of the harmonic evolution across ``hbars``) and
    ``mp`` (``M^p`` ratio stability under lattice refinement).
    """
    grid = config.grid
    g = Window.gaussian(grid)
    lz = PhaseLattice(config.alpha, config.beta, config.radius)
    lw = PhaseLattice(config.alpha, config.beta, config.w_radius)
    tau = config.gabor_tau
    harm, fr = potential_from_name("harmonic"), potential_from_name("free")
    rng = np.random.default_rng(config.seed)
    results: dict[str, dict] = {}
    mats: dict = {}

    if "sparsity" in config.checks:
        chi = _flow_map(harm, 0.0, tau)
        G = gabor_matrix(_slice_operator(harm, tau, 1.0, grid), g, lz, lw)
        fit = decay_fit(G, chi)
        semi = fio_seminorm(G, chi, config.m)
        track = argmax_tracking(G, chi)
        stable = abs(semi.stability - 1) <= 0.10
        results["sparsity"] = {
            "operator": f"slice N=0 harmonic tau={tau:g}", "decay_exponent": fit.exponent,
            "decay_stderr": fit.stderr, "seminorm": semi.as_dict(), "tracking": track,
            "passed": bool(fit.exponent >= 4 and stable and track >= 0.95),
        }
        mats["sparsity"] = (G, chi)

    if "composition" in config.checks:
        m = config.m
        t1, t2 = 0.4, 0.6
        freeop = lambda tt: (lambda v: compose_values(fr, Subdivision((0.0, tt)), 1.0, 0, v, grid))
        # free packets drift by xi (t1 + t2); halve the momentum range so they stay in the box
        lz_free = PhaseLattice(config.alpha, config.beta, config.radius, xi_radius=config.radius / 2)
        rep = composition_decay_check(freeop(t1), freeop(t2), CanonicalMap.shear(t1), CanonicalMap.shear(t2),
                                      m, g, lz_free, lw, config.bound)
        direct = fio_seminorm(gabor_matrix(freeop(t1 + t2), g, lz_free, lw), CanonicalMap.shear(t1 + t2), m).value
        group = rep.composed / direct
        results["composition_free"] = dict(rep.as_dict(), direct=direct, group_ratio=group,
                                           passed=bool(rep.passed and 0.5 <= group <= 2))
        h8 = _slice_operator(harm, tau, 1.0, grid)
        rot = _flow_map(harm, 0.0, tau)
        rep = composition_decay_check(h8, h8, rot, rot, m, g, lz, lw, config.bound)
        results["composition_harmonic"] = rep.as_dict()
        rep = composition_decay_check(h8, freeop(t1), rot, CanonicalMap.shear(t1), m, g, lz, lw, config.bound)
        results["composition_mixed"] = rep.as_dict()

    if "flow" in config.checks:
        anh = potential_from_name("anharmonic")
        nodes = lz.nodes
        dev = flow_composition_deviation(anh, 0.0, 0.4, 1.0, nodes)
        sym = max(symplectic_deviation(_flow_map(p, 0.0, 1.0), rng) for p in (harm, anh))
        results["flow"] = {"composition_deviation": dev, "symplectic_deviation": sym,
                           "passed": bool(dev < 1e-7 and sym < 1e-6)}
        # seminorm of the exact evolution against a split and an unsplit flow
        chi_h = rescaled_flow(_flow_map(anh, 0.4, 1.0), 1.0).compose(rescaled_flow(_flow_map(anh, 0.0, 0.4), 1.0))
        Uop = lambda v: exact_values(anh, v, grid, 1.0, 0.0, 1.0)[0]
        G = gabor_matrix(Uop, g, lz, lw)
        a = fio_seminorm(G, chi_h, config.m).value
        b = fio_seminorm(G, _flow_map(anh, 0.0, 1.0), config.m).value
        results["flow"]["seminorm_split"] = a
        results["flow"]["seminorm_direct"] = b
        results["flow"]["passed"] = results["flow"]["passed"] and abs(a / b - 1) < 0.01

    if "uniformity" in config.checks:
        vals = {}
        chi = CanonicalMap.rotation(tau)
        for h in config.hbars:
            op = lambda v, h=h: exact_values(harm, v, grid, h, 0.0, tau)[0]
            G = gabor_matrix(op, g, lz, lw, hbar=h)
            vals[str(h)] = fio_seminorm(G, rescaled_flow(chi, h), config.m).value
        v = np.array(list(vals.values()))
        results["uniformity"] = {"seminorms": vals, "spread": float(v.max() / v.min() - 1),
                                 "passed": bool(v.max() / v.min() - 1 < 0.5)}

    if "mp" in config.checks:
        _, F = test_family(grid, config.family)
        T = _slice_operator(harm, tau, 1.0, grid)
        TF = T(F)
        coarse = PhaseLattice(config.alpha, config.beta, config.w_radius)
        fine = PhaseLattice(config.alpha / 2, config.beta / 2, config.w_radius)
        out = {}
        for p in config.ps:
            r = [float(np.max(modulation_norms(TF, g, p, lat) / modulation_norms(F, g, p, lat)))
                 for lat in (coarse, fine)]
            out[str(p)] = {"coarse": r[0], "fine": r[1], "change": abs(r[1] / r[0] - 1)}
        results["mp"] = {"ratios": out, "passed": all(np.isfinite(o["coarse"]) and o["change"] <= 0.1
                                                     for o in out.values())}
    return GaborReport(config.as_dict(), results, mats)


# ---------------------------------------------------------------------------
# sharpness


@dataclass
class SharpnessReport:
    config: dict
    rows: list
    fits: dict

    @property
    def passed(self) -> bool:
        return all(f["passed"] for f in self.fits.values())

    def as_dict(self) -> dict:
        return {"kind": "sharpness", "passed": self.passed, "fits": self.fits, "config": self.config}

    def write(self, out) -> list[Path]:
        path = Path(out) / "sharpness.csv"
        _write_rows(path, ["family", "p", "k2", "lam", "ratio"], self.rows)
        return [path]


def _fourier_ratio(grid: GridSpec, f: np.ndarray, p: float, k2: float) -> float:
    Ff = mehler_values(f, grid, 1.0, np.pi / 2)
    return float(sobolev_norms(Ff, grid, p, k2, 1.0) / lp_norms(f, grid, p))


def run_sharpness_probe(config: ExperimentConfig) -> SharpnessReport:
    """Scaling of ``||F f_lam||_{L^p_k2} / ||f_lam||_p`` for the Fourier transform.

    ``F`` is the harmonic evolution to ``pi/2`` at ``hbar = 1``. Translation
    family ``f(x - lam)`` at ``p = 1.5, k2 = config.k2`` (expected exponent
    ``k2``) and at ``p = 2, k2 = 0`` (constant within 2%); dilation family
    ``f(x/lam)`` at ``p = 4`` with ``k2 = -k_p + 0.5`` (expected exponent
    ``k2 + 2 (1/2 - 1/p)``).
    """
    grid = config.grid
    x = grid.axis
    gauss = lambda y: np.exp(-0.5 * y**2).astype(np.complex128)
    rows, fits = [], {}

    def sweep(name, p, k2, lams, make, target):
        vals = []
        for lam in lams:
            f = make(lam)
            mass = boundary_mass(f, grid)
            if mass > 1e-10:
                raise GuardError(f"{name}: lambda = {lam:g} leaves the box (boundary mass {mass:.2e})", lam=lam)
            r = _fourier_ratio(grid, f, p, k2)
            vals.append(r)
            rows.append({"family": name, "p": float(p), "k2": float(k2), "lam": float(lam), "ratio": r})
        if target is None:
            spread = max(vals) / min(vals) - 1
            fits[name] = {"p": p, "k2": k2, "spread": spread, "passed": bool(spread <= 0.02)}
            return
        fit = fit_loglog(lams, vals, min_points=3)
        fits[name] = dict(fit.as_dict(), p=p, k2=k2, target=target, passed=fit.within(target, SLOPE_BAND))

    shift = lambda lam: gauss(x - lam)
    sweep("translation", 1.5, config.k2, config.lambdas, shift, config.k2)
    sweep("translation_p2", 2.0, 0.0, config.lambdas, shift, None)
    p = 4.0
    k2 = -k_exponent(p) + 0.5
    sweep("dilation", p, k2, config.dilations, lambda lam: gauss(x / lam), k2 + 2 * (0.5 - 1 / p))
    return SharpnessReport(config.as_dict(), rows, fits)


# ---------------------------------------------------------------------------
# dumps


@dataclass
class DumpReport:
    kind: str
    config: dict
    writer: Callable = field(repr=False)
    info: dict = field(default_factory=dict)
    passed: bool = True

    def as_dict(self) -> dict:
        return {"kind": self.kind, "passed": self.passed, "info": self.info, "config": self.config}

    def write(self, out) -> list[Path]:
        return self.writer(Path(out))


def run_flow_dump(config: ExperimentConfig) -> DumpReport:
    """Flow map and Jacobian determinant on the ``z`` lattice."""
    pot = config.pot
    z = PhaseLattice(config.alpha, config.beta, config.radius).nodes
    nsteps = max(200, int(np.ceil(400 * (config.t - config.s))))
    pt = hamiltonian_flow(pot, config.s, config.t, z[:, 0], z[:, 1], nsteps)
    J = flow_jacobian(pot, config.s, config.t, z[:, 0], z[:, 1], nsteps)
    det = np.linalg.det(J)
    drift = None
    if not pot.time_dependent:
        e0 = pot.energy(config.s, z[:, 0], z[:, 1])
        drift = float(np.max(np.abs(pot.energy(config.t, pt.x, pt.xi) - e0)))

    def writer(out: Path):
        path = out / "flow.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y", "eta", "x", "xi", "det_jacobian"])
            for k in range(z.shape[0]):
                w.writerow([fmt(z[k, 0]), fmt(z[k, 1]), fmt(pt.x[k]), fmt(pt.xi[k]), fmt(det[k])])
        return [path]

    sym = float(np.max(np.abs(det - 1)))
    info = {"symplectic_deviation": sym, "energy_drift": drift}
    ok = sym < 1e-8 and (drift is None or drift < 1e-8)
    return DumpReport("flow-dump", config.as_dict(), writer, info, bool(ok))


def run_table_dump(config: ExperimentConfig) -> DumpReport:
    """Generating table for one gap ``[s, t]`` plus its tameness report."""
    pot, grid = config.pot, config.grid
    table = generating_table(pot, config.s, config.t, grid.axis, grid.axis, nsteps=config.nsteps)
    rep = tameness_report(table)

    def writer(out: Path):
        path = out / "table.csv"
        table.to_csv(path)
        return [path]

    info = dict(rep.as_dict(), identity_errors=table.generating_identity_errors())
    return DumpReport("table-dump", config.as_dict(), writer, info, bool(rep.passed))


RUNNERS = {
    "converge": run_convergence,
    "bounded": run_boundedness,
    "residual": run_residual_scaling,
    "gabor": run_gabor_report,
    "sharpness": run_sharpness_probe,
    "flow-dump": run_flow_dump,
    "table-dump": run_table_dump,
}


def write_report(report, out) -> Path:
    """Write the report's CSVs and ``summary.json`` into ``out``."""
    os.makedirs(out, exist_ok=True)
    csvs = report.write(out)
    summary = dict(report.as_dict(), outputs=[p.name for p in csvs])
    path = Path(out) / "summary.json"
    with open(path, "w") as fh:
        json.dump(jsonable(summary), fh, indent=2, sort_keys=True)
    return path
