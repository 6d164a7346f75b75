import csv
import json
from pathlib import Path

import numpy as np
import pytest

from sramlab.cli import loglog_slope, main

RC_DECK = """rc step
V1 in 0 PWL(0 0 1p 1.8)
R1 in out 1k
C1 out 0 100f
.tran 1p 1n
.end
"""


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def run_cli(tmp_path, *argv, plots=False):
    out = tmp_path / "out"
    code = main([*argv, "-o", str(out)] + ([] if plots else ["--no-plots"]))
    return code, out


# -- run --------------------------------------------------------------------

def test_run_rc_deck(tmp_path):
    deck = tmp_path / "rc.cir"
    deck.write_text(RC_DECK)
    code, out = run_cli(tmp_path, "run", str(deck), plots=True)
    assert code == 0
    header, data = read_csv(out / "rc_tran.csv")
    t, v = data[:, header.index("time")], data[:, header.index("v(out)")]
    assert np.interp(100e-12 + 1e-12, t, v) == pytest.approx(1.8 * (1 - np.exp(-1)), rel=0.01)
    assert (out / "rc_tran.png").stat().st_size > 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert {Path(f).name for f in manifest["outputs"]} == {"rc_tran.csv", "rc_tran.png"}


def test_run_operating_point_and_sweep(tmp_path):
    deck = tmp_path / "div.cir"
    deck.write_text("divider\nV1 a 0 DC 1.8\nR1 a b 1k\nR2 b 0 1k\n.op\n.dc V1 0 1.8 0.6\n.end\n")
    code, out = run_cli(tmp_path, "run", str(deck))
    assert code == 0
    rows = dict(r for r in csv.reader(open(out / "div_op.csv")) if r[0] != "signal")
    assert float(rows["v(b)"]) == pytest.approx(0.9, rel=1e-6)
    header, sweep = read_csv(out / "div_dc.csv")
    assert np.allclose(sweep[:, header.index("v(b)")], sweep[:, 0] / 2, atol=1e-6)


def test_run_missing_end_reports_line(tmp_path, capsys):
    deck = tmp_path / "bad.cir"
    deck.write_text("bad\nR1 a 0 1k\n")
    code, _ = run_cli(tmp_path, "run", str(deck))
    assert code == 1
    err = capsys.readouterr().err
    assert "MissingEnd" in err and "bad.cir" in err


def test_run_without_analyses_warns(tmp_path, capsys):
    deck = tmp_path / "quiet.cir"
    deck.write_text("quiet\nR1 a 0 1k\n.end\n")
    code, out = run_cli(tmp_path, "run", str(deck))
    assert code == 0
    assert "no analyses" in capsys.readouterr().err
    assert json.loads((out / "manifest.json").read_text())["notes"] == ["no analyses"]


def test_run_missing_file_is_usage_error(tmp_path):
    code, _ = run_cli(tmp_path, "run", str(tmp_path / "nope.cir"))
    assert code == 2


# -- sram -------------------------------------------------------------------

def test_sram_write01(tmp_path, capsys):
    code, out = run_cli(tmp_path, "sram", "--mode", "write01", plots=True)
    assert code == 0
    rows = list(csv.DictReader(open(out / "sram_write01_table.csv")))
    power = {r["supply"]: float(r["average_power"]) for r in rows if r["supply"] in
             ("conventional", "adiabatic")}
    assert power["adiabatic"] < power["conventional"]
    table = json.loads((out / "sram_write01_table.json").read_text())
    assert table["reduction_percent"] > 0
    leak = list(csv.DictReader(open(out / "sram_write01_leakage.csv")))
    assert {r["device"] for r in leak} == {"MN3", "MN4"}
    for name in ("sram_write01_conventional_waveform.png", "sram_write01_adiabatic_waveform.png",
                 "sram_write01_power.png"):
        assert (out / name).is_file()
    assert "write01" in capsys.readouterr().out


def test_sram_invalid_mode_exits_2(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["sram", "--mode", "erase", "-o", str(tmp_path)])
    assert exc.value.code == 2


def test_sram_plan_file(tmp_path):
    plan = tmp_path / "plan.txt"
    plan.write_text("# plan\nmode = write-read\nramp = 2n\n")
    code, out = run_cli(tmp_path, "sram", "--plan", str(plan))
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert str(plan) in manifest["inputs"]
    assert (out / "sram_write-read_table.csv").is_file()


# -- snm --------------------------------------------------------------------

def test_snm_compare(tmp_path):
    code, out = run_cli(tmp_path, "snm", "--mode", "hold", "--compare")
    assert code == 0
    cmp = json.loads((out / "snm_hold_comparison.json").read_text())
    assert cmp["adiabatic"]["snm"] < cmp["conventional"]["snm"]
    assert cmp["adiabatic"]["supply_level"] == pytest.approx(0.9)
    header, _ = read_csv(out / "snm_hold_conventional_butterfly.csv")
    assert header == ["x", "y_curve1", "y_curve2_mirrored"]


def test_snm_read_below_hold(tmp_path):
    snm = {}
    for mode in ("hold", "read"):
        code, out = run_cli(tmp_path / mode, "snm", "--mode", mode)
        assert code == 0
        snm[mode] = json.loads((out / f"snm_{mode}_1.8V.json").read_text())["snm"]
    assert snm["read"] < snm["hold"]


def test_snm_missing_sizing_file_noted(tmp_path):
    code, out = run_cli(tmp_path, "snm", "--sizing", str(tmp_path / "none.txt"))
    assert code == 0
    notes = json.loads((out / "manifest.json").read_text())["notes"]
    assert any("not found" in n for n in notes)


def test_snm_sizing_file_applies(tmp_path):
    sizing = tmp_path / "cell.txt"
    sizing.write_text("driver_wl = 1.0\naccess_wl = 2.0\n")
    code, out = run_cli(tmp_path, "snm", "--mode", "read", "--sizing", str(sizing))
    assert code == 0
    weak = json.loads((out / "snm_read_1.8V.json").read_text())["snm"]
    code, out = run_cli(tmp_path / "d", "snm", "--mode", "read")
    assert weak < json.loads((out / "snm_read_1.8V.json").read_text())["snm"]


def test_snm_bad_supply_sample(tmp_path):
    code, _ = run_cli(tmp_path, "snm", "--supply-sample", "5")
    assert code == 2


# -- sweep ------------------------------------------------------------------

def test_sweep_rc_ramp_period(tmp_path, capsys):
    code, out = run_cli(tmp_path, "sweep", "ramp-period", "--values", "5n,10n,20n,40n",
                        plots=True)
    assert code == 0
    header, data = read_csv(out / "sweep_rc_ramp_period.csv")
    slope = loglog_slope(data[:, 0], data[:, header.index("dissipated_energy")])
    assert slope == pytest.approx(-1.0, abs=0.05)
    summary = json.loads((out / "sweep_rc_ramp_period_summary.json").read_text())
    assert summary["loglog_slope"] == pytest.approx(slope)
    assert (out / "sweep_rc_ramp_period.png").is_file()
    assert "log-log slope" in capsys.readouterr().out


def test_sweep_snm_vdd_parallel(tmp_path):
    code, out = run_cli(tmp_path, "sweep", "vdd", "--target", "snm",
                        "--values", "0.9,1.35,1.8", "--jobs", "2")
    assert code == 0
    header, data = read_csv(out / "sweep_snm_vdd.csv")
    assert np.all(np.diff(data[:, header.index("snm")]) > 0)


@pytest.mark.parametrize("argv", [
    ["sweep", "ramp-period", "--values", ","],
    ["sweep", "ramp-period", "--values", "1n,-2n"],
    ["sweep", "cell-ratio", "--values", "1,2"],
])
def test_sweep_usage_errors(tmp_path, argv):
    code, _ = run_cli(tmp_path, *argv)
    assert code == 2


def test_sweep_runaway_time_unit(tmp_path, capsys):
    # unknown suffix letters are ignored, so "1q" is one second of ramp
    code, _ = run_cli(tmp_path, "sweep", "ramp-period", "--values", "1q")
    assert code == 1
    assert "time points" in capsys.readouterr().err


# -- common -----------------------------------------------------------------

def test_outputs_are_deterministic(tmp_path):
    deck = tmp_path / "rc.cir"
    deck.write_text(RC_DECK)
    _, a = run_cli(tmp_path / "a", "run", str(deck))
    _, b = run_cli(tmp_path / "b", "run", str(deck))
    assert (a / "rc_tran.csv").read_bytes() == (b / "rc_tran.csv").read_bytes()


def test_output_dir_from_environment(tmp_path, monkeypatch):
    deck = tmp_path / "rc.cir"
    deck.write_text(RC_DECK)
    monkeypatch.setenv("SRAMLAB_OUT", str(tmp_path / "env"))
    assert main(["run", str(deck), "--no-plots"]) == 0
    assert (tmp_path / "env" / "rc_tran.csv").is_file()


def test_set_overrides_solver_options(tmp_path):
    deck = tmp_path / "rc.cir"
    deck.write_text(RC_DECK)
    code, out = run_cli(tmp_path, "run", str(deck), "--set", "integrator=be")
    assert code == 0
    sim = json.loads((out / "manifest.json").read_text())["config"]["sim"]
    assert sim["integrator"] == "be"
    code, _ = run_cli(tmp_path / "x", "run", str(deck), "--set", "bogus=1")
    assert code == 2


def test_manifest_lists_existing_outputs(tmp_path):
    code, out = run_cli(tmp_path, "snm", "--mode", "read")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["outputs"]
    for name in manifest["outputs"]:
        assert Path(name).is_file()
