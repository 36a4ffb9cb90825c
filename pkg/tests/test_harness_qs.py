import json
import math

import numpy as np
import pytest

from yoccoz.analysis.calibration import (
    DEFAULT_CALIBRATION,
    Calibration,
    calibrate,
    distortion_sweep,
)
from yoccoz.analysis.harness import (
    gauge_experiment,
    growth_exponent,
    inclusion_report,
    inverse_area_floor,
    synthetic_pair,
    theorem_main_harness,
)
from yoccoz.analysis.qs import (
    _points,
    approximant_qs,
    extension_comparison_report,
    growth_exponents,
    h_approx,
    qs_witness,
    spike_experiment,
    spike_pair,
)
from yoccoz.cell_tree import ParabolicScheme, PairTree, RotationScheme, root
from yoccoz.cf_arith import generate_sequence
from yoccoz.serialize import dumps


@pytest.fixture(scope="module")
def sweep():
    return distortion_sweep((10, 100, 1000), samples=3000, seed=2)


def test_sweep_ratios_stay_in_default_band(sweep):
    lo, hi = DEFAULT_CALIBRATION.band
    r = sweep.ratios()
    assert np.all((r >= lo) & (r <= hi))
    assert abs(sweep.slope) <= 0.15


def test_calibration_choice_and_roundtrip(sweep, tmp_path):
    cal = calibrate(sweep)
    assert cal.C_hat in (1.0, 2.0)
    assert 0 < cal.lam_hat <= 0.5 * sweep.fractions(cal.C_hat).min() + 1e-4
    assert cal.band[0] < sweep.ratios().min() and cal.band[1] > sweep.ratios().max()
    p = tmp_path / "cal.json"
    cal.dump(p)
    back = Calibration.load(p)
    assert back.C_hat == cal.C_hat and back.band == pytest.approx(cal.band)
    assert back.version == cal.version


@pytest.fixture(scope="module")
def pz_report():
    return theorem_main_harness(generate_sequence("stretched-exp", 24), 12, 12000, seed=1)


def test_harness_pz_sequence(pz_report):
    r = pz_report
    assert r.expectation["pz"] and not r.expectation["bounded_type"]
    assert r.forward["fit"].alpha > 0
    assert all(row["ok"] for row in r.level_rows)
    assert r.chain["ok"] and 0 < r.chain["eps"] < 1
    assert r.inverse_floor["ok"]
    assert r.unresolved["fwd"]["ok"] and r.unresolved["inv"]["ok"]
    assert r.consistent


def test_harness_report_is_json(pz_report):
    d = json.loads(dumps(pz_report.to_json()))
    assert d["depth"] == 12 and "chain" in d and d["calibration"]["C_hat"] == DEFAULT_CALIBRATION.C_hat


def test_harness_golden_bounded():
    r = theorem_main_harness([1] * 20, 10, 6000)
    assert r.expectation["bounded_type"]
    assert r.forward["observed"] == "bounded" and r.inverse["observed"] == "bounded"
    assert r.consistent


def test_inverse_floor_levels():
    tree = synthetic_pair([5, 3, 7, 2, 6, 4, 5, 3, 3, 2], 6)
    rep = inverse_area_floor(tree, 6)
    assert len(rep["levels"]) == 7 and rep["ok"]
    assert all(r["min_area"] >= r["floor"] for r in rep["levels"])


def test_growth_exponent():
    n = np.arange(1, 200)
    assert growth_exponent(n, np.ones_like(n, dtype=float)) == pytest.approx(0.0, abs=1e-12)
    assert growth_exponent(n, n**0.3) == pytest.approx(0.3, rel=1e-6)


def test_inclusion_report():
    rows = {r["sequence"]: r for r in inclusion_report(N=300, eps=0.3)}
    c = rows["constant-2"]
    assert c["PZ_bounded"] and c["A_bounded"] and c["PZ_eps_bounded"]
    s = rows["stretched-exp"]
    assert s["A_bounded"] and s["PZ_eps_bounded"] and not s["PZ_bounded"]
    q = rows["square-spikes-eps"]
    assert q["PZ_eps_bounded"] and not q["A_bounded"]
    assert all(r["sum_floor"] and r["implication"] for r in rows.values())


def test_gauge_experiment_agrees():
    rows = gauge_experiment()
    assert all(r["agree"] for r in rows)
    passed = {(r["sequence"], r["gauge"]) for r in rows if r["passed"]}
    assert ("fd-log", "fd") in passed and ("fd-log", "david") not in passed
    assert ("sd", "sd") in passed and ("stretched-exp", "sd") not in passed


def test_witness_on_uniform_points_is_one():
    ts = np.linspace(0, 1, 11)
    assert qs_witness(ts, ts, lambda x: x) == pytest.approx(1.0)
    assert math.isnan(qs_witness(np.array([0.0, 1.0]), np.array([0.0, 1.0]), lambda x: x))


def test_symmetric_approximant_has_unit_ratio():
    rep = approximant_qs(spike_pair(50, symmetric=True), 6)
    assert rep.rho_hat == pytest.approx(1.0, abs=1e-9)


def test_h_approx_interpolates_partition_points():
    tree = spike_pair(20, n=6)
    kids, ts, tt = _points(tree, root())
    for x, y in zip(ts[:-1], tt[:-1]):
        assert h_approx(tree, root(), x, 5) == pytest.approx(y, abs=1e-15)
    x = np.linspace(0.01, 0.99, 50)
    h = np.array([h_approx(tree, root(), t, 5) for t in x])
    assert np.all(np.diff(h) > 0)


def test_golden_qs_bounded():
    rs = RotationScheme([1] * 20, 18)
    tree = PairTree(ParabolicScheme(rs), rs)
    vals = [approximant_qs(tree, n).rho_hat for n in (4, 8, 12, 16)]
    assert max(vals) < 3 and max(vals) / min(vals) < 1.5


def test_spike_growth_is_linear():
    exp = spike_experiment((10, 50, 250))
    assert exp["slope"] == pytest.approx(1.0, abs=0.15)
    c = [r["c"] for r in exp["rows"]]
    assert max(c) / min(c) < 1.3


def test_comparison_table_all_ones_and_spikes():
    exp = spike_experiment((10, 100, 1000))
    table = extension_comparison_report(exp, samples=1500)
    assert all(r["ba"] == pytest.approx(2 * r["rho_hat"]) for r in table)
    assert all(r["ordered"] for r in table if r["spike"] >= 100)
    g = growth_exponents(table)
    assert g["yoccoz_order"] < g["ba"] and g["yoccoz_measured"] < g["ba"]
    ones = approximant_qs(spike_pair(1), 6).rho_hat
    assert 2 * ones < 5
