import json

import numpy as np
import pytest

from timeslice.classical import harmonic
from timeslice.experiments import (
    EXACT_TOL,
    ExperimentConfig,
    _fit_record,
    duhamel_check,
    hermite_functions,
    run_boundedness,
    run_convergence,
    run_flow_dump,
    run_gabor_report,
    run_residual_scaling,
    run_table_dump,
    write_report,
)
from timeslice.experiments import test_family as family
from timeslice.grid import GridSpec, boundary_mass, lp_norms

from conftest import gaussian


def small(**kw):
    base = dict(n=512, box=10.0)
    base.update(kw)
    return ExperimentConfig.from_dict(base)


def test_config_rejects_typos_and_bad_values(tmp_path):
    with pytest.raises(ValueError, match="unknown"):
        ExperimentConfig.from_dict({"hbr": [1.0]})
    for bad in ({"t": 0.0}, {"hbars": [2.0]}, {"orders": [2]}, {"d": 2}, {"slices": [0]}, {"n": 3}):
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict(bad)
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"potential": "anharmonic", "hbars": [0.5]}))
    cfg = ExperimentConfig.from_json(path)
    assert cfg.pot.label == "quadratic-plus-bounded" and cfg.as_dict()["hbars"] == [0.5]


def test_hermite_functions_are_orthonormal():
    grid = GridSpec(1024, 12.0)
    H = hermite_functions(grid.axis, 8)
    gram = H @ H.conj().T * grid.dx
    assert np.max(np.abs(gram - np.eye(8))) < 1e-10


def test_family_is_normalized_and_inside_box():
    grid = GridSpec(512, 10.0)
    names, F = family(grid)
    assert len(names) == F.shape[0] == 12
    assert np.max(np.abs(lp_norms(F, grid, 2) - 1)) < 1e-10
    assert boundary_mass(F, grid) < 1e-10


def test_fit_record_regimes():
    x = [0.5, 0.25, 0.125, 0.0625]
    rec = _fit_record(x, [2 * v**2 for v in x], 2.0, 4, N=1)
    assert rec["passed"] and abs(rec["slope"] - 2) < 1e-12 and rec["N"] == 1
    rec = _fit_record(x, [EXACT_TOL / 10] * 4, 2.0, 4)
    assert rec["exact_regime"] and rec["passed"] and rec["slope"] is None
    rec = _fit_record(x[:2], [1.0, 0.5], 1.0, 4)
    assert rec["passed"] is None and rec["n_points"] == 2


def test_free_convergence_is_exact():
    rep = run_convergence(small(n=1024, t=0.5, potential="free", slices=[1, 2, 4], hbars=[1.0], orders=[0, 1]))
    assert rep.exact_regime and rep.passed


def test_harmonic_convergence_first_order():
    rep = run_convergence(small(n=1024, box=8.0, slices=[1, 2, 4, 8], hbars=[1.0], orders=[0], ps=[2.0, 4.0]))
    assert not rep.exact_regime
    for p in (2.0, 4.0):
        assert abs(rep.slope("omega", N=0, p=p) - 1) < 0.3
    assert rep.passed
    assert all(r["valid"] for r in rep.rows)


def test_boundedness_and_unitarity(tmp_path):
    rep = run_boundedness(small(box=12.0, hbars=[1.0, 0.25], taus=[np.pi / 8], ps=[2.0, 4.0]))
    assert rep.passed
    assert max(c.get("unitarity_deviation", 0) for c in rep.checks) < 1e-6
    path = write_report(rep, tmp_path)
    summary = json.loads(path.read_text())
    assert summary["passed"] and summary["outputs"] == ["bounded.csv"]
    assert (tmp_path / "bounded.csv").read_text().startswith("potential,p,tau,hbar,ratio,reference_method")


def test_residual_first_order_in_tau_and_hbar():
    rep = run_residual_scaling(small(n=1024, box=8.0, taus=[0.1, 0.2, 0.4], hbars=[1.0, 0.5, 0.25], orders=[0], duhamel=False))
    assert rep.passed
    for f in rep.fits:
        assert abs(f["slope"] - 1) < 0.3


def test_duhamel_identity():
    grid = GridSpec(1024, 6.0)
    f = gaussian(grid.axis, 0.3, 0.5)
    rec = duhamel_check(harmonic(), grid, f, 1.0, 0.0, 0.4, 0)
    assert rec["passed"] and rec["relative_error"] < 5e-3
    with pytest.raises(ValueError):
        duhamel_check(harmonic(), grid, f, 1.0, 0.0, 0.4, 0, intervals=7)


def test_gabor_sparsity_report(tmp_path):
    rep = run_gabor_report(ExperimentConfig(n=1024, box=20.0, radius=6.0, w_radius=10.0))
    res = rep.results["sparsity"]
    assert rep.passed and res["decay_exponent"] >= 4 and res["tracking"] >= 0.95
    write_report(rep, tmp_path)
    assert (tmp_path / "gabor_sparsity.csv").exists()


def test_flow_and_table_dumps(tmp_path):
    rep = run_flow_dump(small(potential="anharmonic", radius=2.0))
    assert rep.passed and rep.info["symplectic_deviation"] < 1e-8
    write_report(rep, tmp_path)
    header = (tmp_path / "flow.csv").read_text().splitlines()[0]
    assert header == "y,eta,x,xi,det_jacobian"
    rep = run_table_dump(ExperimentConfig(n=64, box=4.0, t=0.5))
    assert rep.passed
    write_report(rep, tmp_path)
    assert (tmp_path / "table.csv").exists()
