import json
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ioncavity.cavity import CavitySpec, waist_from_geometry
from ioncavity.optimizer import (
    SWEEP_COLUMNS,
    NoConstraint,
    NoFeasiblePointError,
    PowerLawConstraint,
    TableConstraint,
    default_constraint,
    emit_report,
    evaluate_point,
    read_sweep_csv,
    sweep,
)
from ioncavity.species import CA40

U_RF = np.arange(150.0, 401.0, 10.0)
U_END = np.round(np.arange(0.3, 10.01, 0.1), 12)


@pytest.fixture(scope="module")
def default_sweep():
    return sweep(U_RF, U_END, CA40, CavitySpec(), linewidth_fwhm=4e6)


def test_default_table():
    t = default_constraint()
    assert t.u_rf[0] == 100 and t.u_rf[-1] == 400
    assert t.monotone_non_increasing
    assert math.isnan(t.max_length(90))
    assert t.max_length(325) == pytest.approx(0.5 * (2.9e-3 + 2.3e-3))


def test_table_validation(tmp_path):
    with pytest.raises(ValueError):
        TableConstraint((100, 100), (1e-3, 1e-3))
    with pytest.raises(ValueError):
        TableConstraint((100, 200), (1e-3, -1e-3))
    p = tmp_path / "c.csv"
    p.write_text("u_rf,len\n1,2\n")
    with pytest.raises(ValueError, match="columns"):
        TableConstraint.from_csv(p)


def test_power_law():
    c = PowerLawConstraint(l_ref=3e-3, u_ref=300.0, exponent=2.0, n_exponent=1.0)
    assert c.max_length(150.0) == pytest.approx(12e-3)
    assert c.max_length(300.0, n_total=2e5) == pytest.approx(1.5e-3)
    assert math.isnan(c.max_length(0.0))


def test_argmax_at_350(default_sweep):
    best = default_sweep.argmax
    assert best.u_rf == 350.0
    assert best.n_in_mode >= 2000
    assert best.feasible
    assert "length_capped" in best.flags
    assert default_sweep.threshold == 431


def test_unconstrained_monotone():
    res = sweep(U_RF, U_END, CA40, CavitySpec(), constraint=NoConstraint(), linewidth_fwhm=4e6)
    best = res.best_per_u_rf()
    assert np.all(np.isfinite(best))
    assert np.all(np.diff(best) > 0)


def test_point_flags():
    mode = waist_from_geometry(CavitySpec())
    assert evaluate_point(0.0, 1.0, CA40, mode, NoConstraint()).flags == ("no_rf",)
    assert evaluate_point(800.0, 1.0, CA40, mode, NoConstraint()).flags == ("q_unstable",)
    assert "q_warn" in evaluate_point(400.0, 1.0, CA40, mode, NoConstraint()).flags
    assert evaluate_point(150.0, 1e3, CA40, mode, NoConstraint()).flags == ("radially_deconfined",)
    assert evaluate_point(150.0, 0.0, CA40, mode, NoConstraint()).flags == ("extreme_anisotropy",)
    assert evaluate_point(90.0, 1.0, CA40, mode, default_constraint()).flags == ("constraint_undefined",)


def test_no_feasible():
    with pytest.raises(NoFeasiblePointError) as err:
        sweep([800.0, 900.0], [1.0], CA40, CavitySpec())
    d = err.value.to_dict()
    assert d["error"]


def test_tie_break_highest_u_end(default_sweep):
    grid = default_sweep.grid()
    i = list(default_sweep.u_rf).index(350.0)
    row = grid[i][default_sweep.feasible_grid()[i]]
    ties = [u for u, n in zip(default_sweep.u_end, grid[i]) if n == row.max()]
    assert default_sweep.argmax.u_end == max(ties)


@settings(max_examples=8, deadline=None)
@given(scale=st.floats(0.5, 1.5))
def test_argmax_invariant_under_constraint_scaling(scale):
    # while the length cap binds, N_in_mode is density times cap, so a uniform
    # rescaling of the cap cannot move the optimum
    base = default_constraint()
    scaled = TableConstraint(base.u_rf, tuple(scale * l for l in base.lengths))
    kw = dict(u_end_values=U_END, ion=CA40, cavity=CavitySpec(), linewidth_fwhm=4e6)
    a = sweep(U_RF, constraint=base, **kw).argmax
    b = sweep(U_RF, constraint=scaled, **kw).argmax
    assert "length_capped" in b.flags
    assert a.u_rf == b.u_rf
    assert b.n_in_mode == pytest.approx(scale * a.n_in_mode, rel=1e-9)


def test_grid_refinement_stable():
    coarse = sweep(U_RF, U_END, CA40, CavitySpec(), linewidth_fwhm=4e6)
    fine = sweep(np.arange(150.0, 400.1, 2.5), np.arange(0.3, 10.0, 0.05), CA40, CavitySpec(), linewidth_fwhm=4e6)
    assert abs(fine.argmax.u_rf - coarse.argmax.u_rf) <= 10.0
    assert fine.argmax.n_in_mode >= coarse.argmax.n_in_mode * (1 - 1e-9)


def test_parallel_map_identical(default_sweep):
    with ThreadPoolExecutor(4) as ex:
        par = sweep(U_RF, U_END, CA40, CavitySpec(), linewidth_fwhm=4e6, map_fn=ex.map)
    assert par.points == default_sweep.points


def test_report_round_trip(default_sweep, tmp_path):
    text, summary = emit_report(default_sweep, tmp_path / "s.csv", tmp_path / "s.json")
    assert text.splitlines()[0] == ",".join(SWEEP_COLUMNS)
    rows = read_sweep_csv(tmp_path / "s.csv")
    assert len(rows) == len(default_sweep.points)
    for r, p in zip(rows, default_sweep.points):
        assert r["u_rf_V"] == p.u_rf and r["u_end_V"] == p.u_end and r["feasible"] == p.feasible
        if p.feasible:
            assert r["n_in_mode"] == p.n_in_mode
    loaded = json.loads((tmp_path / "s.json").read_text())
    assert loaded == json.loads(json.dumps(summary))
    assert loaded["argmax"]["u_rf"] == 350.0
