import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from timeslice.classical import (
    action_integral,
    anharmonic,
    classical_bvp,
    custom,
    flow_jacobian,
    free,
    generating_table,
    hamilton_jacobi_residual,
    hamiltonian_flow,
    harmonic,
    modulated_harmonic,
    potential_from_name,
    tameness_report,
)
from timeslice.exceptions import CausticError, IntegrationError

AXIS = np.linspace(-4, 4, 65)


def test_registry():
    assert potential_from_name("quadratic-plus-bounded", a=0.3).params == (0.3,)
    assert potential_from_name("anharmonic").label == "quadratic-plus-bounded"
    with pytest.raises(ValueError):
        potential_from_name("quartic")


def test_declared_derivative_bounds():
    for pot in (free(), harmonic(), anharmonic(), modulated_harmonic()):
        assert pot.check_assumption_a(times=(0.0, 1.0, 2.0))["passed"], pot.label
    quartic = custom(lambda t, x: x**4, lambda t, x: 4 * x**3, lambda t, x: 12 * x**2, {2: 1.0, 3: 1.0})
    assert not quartic.check_assumption_a()["passed"]


def test_harmonic_flow_is_rotation():
    y = np.linspace(-3, 3, 7)
    eta = np.linspace(2, -2, 7)
    tau = 0.9
    pt = hamiltonian_flow(harmonic(), 0.0, tau, y, eta)
    assert np.max(np.abs(pt.x - (y * np.cos(tau) + eta * np.sin(tau)))) < 1e-9
    assert np.max(np.abs(pt.xi - (-y * np.sin(tau) + eta * np.cos(tau)))) < 1e-9
    J = flow_jacobian(harmonic(), 0.0, tau, 0.3, 0.1)
    R = np.array([[np.cos(tau), np.sin(tau)], [-np.sin(tau), np.cos(tau)]])
    assert np.max(np.abs(J - R)) < 1e-9


def test_free_flow_is_shear():
    pt = hamiltonian_flow(free(), 1.0, 3.0, 0.5, -0.25, nsteps=4)
    assert pt.x == pytest.approx(0.0, abs=1e-14) and pt.xi == pytest.approx(-0.25)


@given(st.floats(-4, 4), st.floats(-4, 4), st.floats(0.1, 2.0),
       st.sampled_from(["harmonic", "anharmonic", "modulated-harmonic"]))
def test_flow_is_symplectic(y, eta, tau, name):
    J = flow_jacobian(potential_from_name(name), 0.2, 0.2 + tau, y, eta)
    assert abs(np.linalg.det(J) - 1) < 1e-8


@given(st.floats(-4, 4), st.floats(-4, 4))
def test_energy_conserved_for_static_potential(y, eta):
    pot = anharmonic()
    pt = hamiltonian_flow(pot, 0.0, 1.0, y, eta)
    assert abs(pot.energy(1.0, pt.x, pt.xi) - pot.energy(0.0, y, eta)) < 1e-8


def test_blow_up_is_reported():
    runaway = custom(lambda t, x: -(x**4), lambda t, x: -4 * x**3, lambda t, x: -12 * x**2, {2: 1.0, 3: 1.0})
    with np.errstate(all="ignore"), pytest.raises(IntegrationError):
        hamiltonian_flow(runaway, 0.0, 1.0, 10.0, 0.0)


def test_bvp_matches_harmonic_closed_form():
    tau, y, x = 0.7, -0.4, 1.3
    traj = classical_bvp(harmonic(), 0.0, tau, y, x)
    S, eta, xi = harmonic().closed_form(tau, x, y)
    assert traj.eta == pytest.approx(float(eta), abs=1e-9)
    assert traj.endpoint_error < 1e-10
    assert action_integral(harmonic(), traj) == pytest.approx(float(S), abs=1e-9)


def test_bvp_caustic_at_focal_time():
    with pytest.raises(CausticError, match="short-time threshold exceeded"):
        classical_bvp(harmonic(), 0.0, np.pi, 0.0, 1.0)
    with pytest.raises(CausticError):
        classical_bvp(harmonic(), 0.0, 1.0, 0.0, 1.0, short_time_bound=0.5)


def test_table_matches_closed_form():
    tau = 0.5
    tab = generating_table(harmonic(), 0.0, tau, AXIS, AXIS)
    S, eta, xi = harmonic().closed_form(tau, AXIS[:, None], AXIS[None, :])
    assert np.max(np.abs(tab.S - S) / np.maximum(1, np.abs(S))) < 1e-8
    assert np.max(np.abs(tab.eta - eta)) < 1e-8
    assert np.max(np.abs(tab.xi - xi)) < 1e-8
    exact = generating_table(harmonic(), 0.0, tau, AXIS, AXIS, method="closed-form")
    assert np.array_equal(exact.S, S)


def test_compiled_and_generic_tables_agree():
    a = 0.2
    generic = custom(lambda t, x: 0.5 * x**2 + a * np.cos(x), lambda t, x: x - a * np.sin(x),
                     lambda t, x: 1 - a * np.cos(x), {2: 1.2, 3: 0.2})
    ax = np.linspace(-3, 3, 17)
    fast = generating_table(anharmonic(a), 0.0, 0.4, ax, ax)
    slow = generating_table(generic, 0.0, 0.4, ax, ax)
    assert slow.method == fast.method == "bvp"
    assert np.max(np.abs(fast.S - slow.S)) < 1e-5
    assert np.max(np.abs(fast.eta - slow.eta)) < 1e-8


def test_table_against_single_bvp_time_dependent():
    pot = modulated_harmonic(0.3)
    ax = np.linspace(-2, 2, 9)
    tab = generating_table(pot, 0.5, 1.1, ax, ax)
    traj = classical_bvp(pot, 0.5, 1.1, ax[2], ax[6], nsteps=400)
    assert tab.S[6, 2] == pytest.approx(action_integral(pot, traj), abs=1e-8)
    assert tab.eta[6, 2] == pytest.approx(traj.eta, abs=1e-8)


def test_generating_identities_and_symmetry():
    # second-order differences on the table: the axis must be fine
    ax = np.linspace(-4, 4, 257)
    tab = generating_table(anharmonic(), 0.0, 0.5, ax, ax)
    err = tab.generating_identity_errors()
    assert err["dSdx_minus_xi"] < 1e-5 and err["dSdy_plus_eta"] < 1e-5
    assert tab.mixed_symmetry_error() < 1e-6
    # static potentials are time-reversible
    assert np.max(np.abs(tab.S - tab.S.T)) < 1e-10


def test_hamilton_jacobi_residual():
    ax = np.linspace(-4, 4, 129)
    for pot in (anharmonic(), modulated_harmonic()):
        assert np.max(hamilton_jacobi_residual(pot, 0.0, 0.6, ax, ax)) < 1e-5


@pytest.mark.parametrize("tau", [0.1, 0.4, np.pi / 4])
@pytest.mark.parametrize("name", ["harmonic", "anharmonic"])
def test_tameness_holds_for_short_times(tau, name):
    rep = tameness_report(generating_table(potential_from_name(name), 0.0, tau, AXIS, AXIS))
    assert rep.passed
    assert rep.max_tau_Sxy == pytest.approx(tau / np.sin(tau), rel=0.05)


def test_tameness_fails_near_focal_time():
    ax = np.linspace(-2, 2, 17)
    assert not tameness_report(generating_table(harmonic(), 0.0, 1.55, ax, ax)).passed


def test_table_caustic_names_pair():
    with pytest.raises(CausticError) as info:
        generating_table(harmonic(), 0.0, np.pi, AXIS, AXIS, cache=False)
    assert "x, y" in str(info.value)
    with pytest.raises(CausticError):
        generating_table(harmonic(), 0.0, 1.0, AXIS, AXIS, short_time_bound=0.5)


def test_table_csv(tmp_path):
    ax = np.linspace(-1, 1, 5)
    generating_table(free(), 0.0, 0.5, ax, ax).to_csv(tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["x", "y", "S", "Sxx", "Sxy", "Syy", "converged"]
    assert len(rows) == 26
    assert float(rows[1][2]) == pytest.approx(0.0)
    assert float(rows[2][2]) == pytest.approx(0.25)
