import json
import math

import numpy as np
import pytest

from ioncavity import cli
from ioncavity.config import ConfigError, ToolConfig, load_config, parse_config
from ioncavity.md import io as mdio
from ioncavity.optimizer import NoConstraint, PowerLawConstraint, TableConstraint, read_sweep_csv

TWO_PI = 2 * math.pi


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_defaults():
    cfg = load_config(None)
    assert cfg.voltages.u_rf == 130.0 and cfg.voltages.u_end == 3.9
    assert cfg.species.isotope_label == "40Ca+"
    assert cfg.sweep.u_end_values()[:3] == [0.3, 0.4, 0.5]
    assert cfg.sweep.u_rf_values()[-1] == 400.0


def test_full_config(tmp_path):
    p = write(tmp_path, """
[trap]
r0_m = 2.0e-3
rf_frequency_hz = 5.0e6

[voltages]
u_rf_volts = 200.0
u_end_volts = 2.0

[species]
name = "46Ca+"

[species.table."46Ca+"]
mass_u = 45.953
isotope_shift_866_hz = 6.4e9

[sweep]
constraint = "power_law"

[sweep.power_law]
l_ref_m = 3e-3
u_ref_volts = 300.0
exponent = 2.0

[md]
species = ["40Ca+", "46Ca+"]
ion_counts = [3, 4]
seed = 9
""")
    cfg = load_config(p)
    assert cfg.geometry.r0 == 2.0e-3
    assert cfg.geometry.omega_rf == pytest.approx(TWO_PI * 5e6)
    assert cfg.species.transition.isotope_shift == 6.4e9
    assert isinstance(cfg.sweep.constraint, PowerLawConstraint)
    assert cfg.md.ion_counts == (3, 4) and cfg.md.seed == 9
    assert cfg.md.voltages.u_rf == 200.0


def test_constraint_kinds(tmp_path):
    assert isinstance(parse_config({"sweep": {"constraint": "none"}}).sweep.constraint, NoConstraint)
    (tmp_path / "t.csv").write_text("u_rf_V,max_length_m\n100,1e-3\n200,5e-4\n")
    p = write(tmp_path, '[sweep]\nconstraint = "table"\nconstraint_table = "t.csv"\n')
    c = load_config(p).sweep.constraint
    assert isinstance(c, TableConstraint) and c.max_length(150) == pytest.approx(7.5e-4)
    with pytest.raises(ConfigError, match="unknown constraint"):
        parse_config({"sweep": {"constraint": "magic"}})


def test_unknown_key_reports_path_and_line(tmp_path):
    p = write(tmp_path, "[trap]\nr0_m = 2e-3\nradius_mm = 2.0\n")
    with pytest.raises(ConfigError) as err:
        load_config(p)
    assert err.value.key == "trap.radius_mm"
    assert err.value.line == 3


def test_unknown_block_and_bad_values(tmp_path):
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config({"laser": {}})
    with pytest.raises(ConfigError, match="must be a number"):
        parse_config({"voltages": {"u_rf_volts": "high"}})
    with pytest.raises(ConfigError):
        parse_config({"trap": {"eta": 2.0}})
    with pytest.raises(ConfigError, match="unknown species"):
        parse_config({"species": {"name": "41Ca+"}})
    p = write(tmp_path, "[trap\nr0_m = 1\n")
    with pytest.raises(ConfigError, match="TOML") as err:
        load_config(p)
    assert err.value.line == 1


def test_trap_params_cli(capsys):
    code, out, _ = run_cli(capsys, "--json", "trap-params")
    assert code == 0
    d = json.loads(out)
    assert d["f_z_hz"] == pytest.approx(160e3, rel=0.03)
    assert d["f_r_hz"] == pytest.approx(225e3, rel=0.03)
    code, out, _ = run_cli(capsys, "trap-params", "--u-rf", "400")
    assert code == 0 and "q_flag" in out and "WARN" in out.upper()


def test_human_and_json_share_result(capsys):
    _, js, _ = run_cli(capsys, "--json", "cavity")
    _, table, _ = run_cli(capsys, "cavity")
    d = json.loads(js)
    assert d["strong_coupling_threshold"] == 431
    for key in d:
        assert key in table


def test_crystal_cli(capsys):
    code, out, _ = run_cli(capsys, "--json", "crystal", "--second-species", "44Ca+", "--second-count", "1000")
    d = json.loads(out)
    assert code == 0
    assert d["total_length_m"] == pytest.approx(3e-3, rel=0.15)
    assert d["two_component"]["inner_species"] == "40Ca+"


def test_ions_in_mode_cli(capsys):
    code, out, _ = run_cli(capsys, "--json", "ions-in-mode")
    d = json.loads(out)
    assert code == 0
    assert d["n_closed_form"] == pytest.approx(2.0e3, rel=0.05)
    assert d["relative_difference"] < 0.01
    assert d["strong_coupling"]


def test_sweep_cli(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "--json", "--out", str(tmp_path / "sw"), "sweep")
    assert code == 0
    d = json.loads(out)
    assert d["argmax"]["u_rf"] == 350.0
    rows = read_sweep_csv(tmp_path / "sw.csv")
    assert len(rows) == 26 * 98
    assert json.loads((tmp_path / "sw.json").read_text())["argmax"] == d["argmax"]


def test_sweep_infeasible_exit(capsys, tmp_path):
    p = write(tmp_path, "[sweep]\nu_rf_min_volts = 800\nu_rf_max_volts = 900\n")
    code, _, err = run_cli(capsys, "--config", str(p), "sweep")
    assert code == 3
    assert json.loads(err)["error"]


def test_config_error_exit(capsys, tmp_path):
    p = write(tmp_path, "[voltages]\nu_rf = 1\n")
    code, _, err = run_cli(capsys, "--config", str(p), "trap-params")
    assert code == 2
    e = json.loads(err)["error"]
    assert e["key"] == "voltages.u_rf" and e["line"] == 2


def test_deconfined_exit(capsys):
    code, _, err = run_cli(capsys, "trap-params", "--u-rf", "0")
    assert code == 3
    assert "deconfined" in err


def test_fit_cli(capsys, tmp_path):
    p = tmp_path / "load.csv"
    t = np.linspace(0, 10, 21)
    p.write_text("t_s,value\n" + "".join(f"{float(a)!r},{float(3200 * a + 5)!r}\n" for a in t))
    code, out, _ = run_cli(capsys, "--json", "fit", "--input", str(p))
    assert code == 0 and json.loads(out)["slope"] == pytest.approx(3200.0)
    pz = tmp_path / "pzt.csv"
    pz.write_text("t_s,value\n1,82e6\n1,82e6\n2,164e6\n3,246e6\n")
    code, out, _ = run_cli(capsys, "--json", "fit", "--kind", "pzt", "--input", str(pz))
    assert code == 0 and json.loads(out)["slope"] == pytest.approx(82e6)
    code, _, _ = run_cli(capsys, "fit", "--input", str(tmp_path / "missing.csv"))
    assert code == 2


def test_simulate_relax_cli(capsys, tmp_path):
    snap = tmp_path / "snap.csv"
    code, out, _ = run_cli(capsys, "--json", "--seed", "3", "--out", str(snap), "simulate")
    assert code == 0
    d = json.loads(out)
    assert d["seed"] == 3 and d["n_ions"] == 2
    assert d["spacing_m"] == pytest.approx(19e-6, rel=0.05)
    species, pos = mdio.read_snapshot_csv(snap)
    assert pos.shape == (2, 3)


def test_simulate_run_reproducible(capsys, tmp_path):
    p = write(tmp_path, "[md]\nion_counts = [4]\nduration_s = 2.5e-6\nrecord_every = 100\nrecoil_velocity_m_s = 0.01\n")
    outs = []
    for name in ("a.npz", "b.npz"):
        code, _, _ = run_cli(capsys, "--config", str(p), "--seed", "5", "--out", str(tmp_path / name),
                             "simulate", "--mode", "run")
        assert code == 0
        outs.append(mdio.read_trajectory_npz(tmp_path / name))
    for a, b in zip(*outs):
        assert np.array_equal(a, b)
    assert outs[0][2].shape == (10, 4, 3)
    code, _, _ = run_cli(capsys, "--config", str(p), "--out", str(tmp_path / "c.csv"), "simulate", "--mode", "run")
    assert code == 0
    t, sp, pos, vel = mdio.read_trajectory_csv(tmp_path / "c.csv")
    assert pos.shape == (10, 4, 3)


def test_default_tool_config_type():
    assert isinstance(ToolConfig().md.beta, float)
