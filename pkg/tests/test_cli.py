import json
import math
import shutil
from pathlib import Path

import numpy as np
import pytest

from corrkin import __version__
from corrkin.cli import main
from corrkin.config import ConfigError, parse_config
from corrkin.orchestrator import ComputationError, ReferenceCurve, render_csv

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

PLASMA = """e2 = 0.05477225575051662
mass = 1.0
density = 1.452879207831368
temperature = 1.0
hbar = 0.01
spin = 1
kappa_D = {kappa_d}
"""


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def read_table(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    names = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return {n: data[:, i] for i, n in enumerate(names)}


def test_unknown_key_is_rejected_without_outputs(tmp_path, capsys):
    cfg = write(tmp_path, PLASMA.format(kappa_d=1.0) + "\n[formation]\nt_end = 5\nn_steps = 10\n")
    out = tmp_path / "out"
    assert main(["formation", "--config", str(cfg), "--out", str(out)]) == 2
    assert not out.exists()
    err = capsys.readouterr().err
    assert "line 11" in err and "n_steps" in err


def test_unknown_plasma_key_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config("e2 = 1\nmass = 1\ntemprature = 1\n")
    assert info.value.line == 3 and info.value.key == "temprature"


def test_non_finite_input_is_a_config_error(tmp_path):
    cfg = write(tmp_path, PLASMA.format(kappa_d="nan"))
    assert main(["formation", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_non_finite_output_fails_the_run(tmp_path):
    scenario = parse_config(PLASMA.format(kappa_d=1.0))
    with pytest.raises(ComputationError):
        render_csv(scenario, ["tau", "v"], [(0.0, 1.0), (1.0, math.nan)])
    bad = write(tmp_path, "tau,e_kin\n0,1\n1,nan\n", "bad.csv")
    good = write(tmp_path, "tau,e_kin\n0,1\n1,2\n", "good.csv")
    cfg = write(tmp_path, PLASMA.format(kappa_d=1.0) + f"[compare]\nreference = {good.name}\ncandidate = {bad.name}\n")
    assert main(["compare", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert not (tmp_path / "o").exists()


def test_formation_csv_is_reproducible_and_headed(tmp_path):
    cfg = SCENARIOS / "weak_ocp.cfg"
    assert main(["formation", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["formation", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    first = (tmp_path / "a" / "formation.csv").read_bytes()
    assert first == (tmp_path / "b" / "formation.csv").read_bytes()
    text = first.decode()
    assert text.startswith(f"# corrkin {__version__}\n# config_hash ")
    table = read_table(tmp_path / "a" / "formation.csv")
    assert set(table) == {"tau", "e_kin", "e_coll", "e_init", "e_corr"}


def test_config_hash_ignores_comments_and_layout():
    a = parse_config(PLASMA.format(kappa_d=1.0))
    b = parse_config("# note\n" + PLASMA.format(kappa_d="1.000").replace(" = ", "="))
    assert a.digest == b.digest
    assert a.digest != parse_config(PLASMA.format(kappa_d=2.0)).digest


def test_over_correlated_start_releases_correlation_energy(tmp_path):
    cfg = write(tmp_path, PLASMA.format(kappa_d=1.0) + "\n[formation]\nx = 1\nx0 = 0.5\nt_end = 30\n")
    assert main(["formation", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    e_corr = read_table(tmp_path / "o" / "formation.csv")["e_corr"]
    assert abs(e_corr[0]) > abs(e_corr[-1])


def test_compare_identical_and_disjoint_curves(tmp_path):
    shutil.copy(SCENARIOS / "weak_ocp.cfg", tmp_path / "weak.cfg")
    assert main(["formation", "--config", str(tmp_path / "weak.cfg"), "--out", str(tmp_path)]) == 0
    cfg = write(tmp_path, PLASMA.format(kappa_d=2.0) + "[compare]\nreference = formation.csv\ncandidate = formation.csv\n",
                "cmp.cfg")
    assert main(["compare", "--config", str(cfg), "--out", str(tmp_path / "c")]) == 0
    report = json.loads((tmp_path / "c" / "compare.json").read_text())
    assert report["max_rel"] == 0.0 and report["rms_rel"] == 0.0
    assert report["reference"] == "formation.csv"
    write(tmp_path, "tau,e_kin\n50,1\n60,2\n", "late.csv")
    cfg = write(tmp_path, PLASMA.format(kappa_d=2.0) + "[compare]\nreference = formation.csv\ncandidate = late.csv\n",
                "cmp.cfg")
    assert main(["compare", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 3
    assert not (tmp_path / "d").exists()


def test_reference_curve_rejects_unsorted_abscissa():
    with pytest.raises(ValueError):
        ReferenceCurve("x", [0.0, 2.0, 1.0], [1.0, 2.0, 3.0])


def test_levinson_flags_and_consistent_start(tmp_path):
    cfg = SCENARIOS / "weak_ocp.cfg"
    target = tmp_path / "lev" / "run.csv"
    argv = ["levinson", "--config", str(cfg), "--t-end", "1.0", "--dt", "0.1", "--grid-n", "16",
            "--degenerate", "off", "--initial-corr", "debye:2.0", "--out", str(target)]
    assert main(argv) == 0
    table = read_table(target)
    assert list(table) == ["tau", "e_kin", "density_drift", "energy_drift"]
    # initial correlations with the dynamical screening keep the plasma stationary
    assert np.ptp(table["e_kin"]) <= 1e-6 * abs(table["e_kin"][0])
    report = json.loads(target.with_suffix(".json").read_text())
    assert report["steps"] > 0
    first = target.read_bytes()
    assert main(argv) == 0
    assert target.read_bytes() == first


def test_levinson_rejects_bad_initial_correlation_flag(tmp_path):
    argv = ["levinson", "--config", str(SCENARIOS / "weak_ocp.cfg"), "--grid-n", "8",
            "--initial-corr", "gauss:1", "--out", str(tmp_path / "x.csv")]
    assert main(argv) == 2
    assert not (tmp_path / "x.csv").exists()


def test_shifts_table_and_collision_outputs(tmp_path, capsys):
    cfg = SCENARIOS / "nuclear_toy.cfg"
    assert main(["shifts", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    printed = capsys.readouterr().out
    assert "delta_t" in printed and "delta_r" in printed
    lines = [ln for ln in (tmp_path / "shifts.csv").read_text().splitlines() if not ln.startswith("#")]
    rows = {(r.split(",")[0], r.split(",")[1]): r.split(",")[2:] for r in lines[1:]}
    value, fd = map(float, rows[("delta_t", "-")])
    assert value > 0 and fd == pytest.approx(value, rel=1e-6)

    assert main(["nlcollide", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    table = read_table(tmp_path / "nlcollide.csv")
    assert np.all(np.abs(table["dfdt_nonlocal"]) < 1e-12)


def test_quasiparticle_outputs(tmp_path):
    assert main(["qp", "--config", str(SCENARIOS / "nuclear_toy.cfg"), "--out", str(tmp_path)]) == 0
    audit = read_table(tmp_path / "qp_sumrules.csv")
    assert np.all(audit["m0_error"] <= 1e-6) and np.all(audit["m1_error"] <= 1e-4)
    rho = read_table(tmp_path / "qp_rho.csv")
    assert np.all(rho["rho"] > 0)


def test_thermo_report_layout(tmp_path):
    text = (SCENARIOS / "nuclear_toy.cfg").read_text().replace("check = on", "check = off")
    cfg = write(tmp_path, text)
    assert main(["thermo", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "thermo.json").read_text())
    for key in ("n_qp", "delta_n", "e_qp", "delta_e", "stress_qp", "delta_stress"):
        assert key in report
    assert report["delta_n"] > 0
    assert np.allclose(report["stress_qp"], np.array(report["stress_qp"]).T)
