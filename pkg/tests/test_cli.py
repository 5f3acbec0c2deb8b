import csv
import json

import pytest

from sagin_aoi.cli import EXIT_CHECK, EXIT_INVALID, EXIT_OK, main
from sagin_aoi.config import save_scenario


@pytest.fixture
def scen(small_cfg, tmp_path):
    path = tmp_path / "small.json"
    save_scenario(small_cfg.replace(episode_slots=5), path)
    return str(path)


def test_run_writes_metrics(scen, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--scenario", scen, "--seeds", "0", "1", "--out", str(out)]) == EXIT_OK
    rows = list(csv.DictReader(open(out / "aggregate.csv")))
    assert [r["seed"] for r in rows] == ["0", "1"]
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "run" and len(man["runs"]) == 2
    assert "seed=0" in capsys.readouterr().out


def test_run_strict(scen, tmp_path):
    assert main(["run", "--scenario", scen, "--strict", "--l1", "td-uav", "--out", str(tmp_path / "o")]) == EXIT_OK


def test_missing_scenario(tmp_path):
    assert main(["run", "--scenario", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == EXIT_INVALID


def test_bad_scenario_value(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"n_uavs": 0}))
    assert main(["run", "--scenario", str(path), "--out", str(tmp_path / "o")]) == EXIT_INVALID


def test_unparsable_scenario(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{ not json")
    assert main(["run", "--scenario", str(path), "--out", str(tmp_path / "o")]) == EXIT_INVALID


def test_g3m_without_checkpoint(scen, tmp_path):
    assert main(["run", "--scenario", scen, "--l1", "g3m", "--out", str(tmp_path / "o")]) == EXIT_INVALID


def test_unknown_l1(scen, tmp_path):
    assert main(["run", "--scenario", scen, "--l1", "zzz", "--out", str(tmp_path / "o")]) == EXIT_INVALID


def test_sweep(scen, tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    code = main(["sweep", "--scenario", scen, "--param", "uav_batt_cap", "--values", "19000.0", "20000.0",
                 "--schemes", "is-uav:dmla", "dc-uav:uafp", "--seeds", "0", "1", "--out", str(out)])
    assert code == EXIT_OK
    assert len(list(csv.DictReader(open(out)))) == 8
    assert capsys.readouterr().out.count("D_G=") == 4


def test_sweep_bad_scheme(scen, tmp_path):
    code = main(["sweep", "--scenario", scen, "--param", "uav_batt_cap", "--values", "1.0",
                 "--schemes", "is-uav", "--out", str(tmp_path / "s.csv")])
    assert code == EXIT_INVALID


def test_slsdo_analytic(scen, tmp_path, capsys):
    out = tmp_path / "slsdo.json"
    code = main(["slsdo", "--scenario", scen, "--oracle", "analytic", "--pilot-slots", "20",
                 "--saoi-range", "0.0", "1.0", "--out", str(out)])
    assert code == EXIT_OK
    rep = json.loads(out.read_text())
    assert rep["feasible"] and len(rep["probes"]) == 1
    assert "required satellites per orbit" in capsys.readouterr().out


def test_slsdo_bad_range(scen, tmp_path):
    code = main(["slsdo", "--scenario", scen, "--saoi-range", "0.5", "0.1", "--pilot-slots", "5"])
    assert code == EXIT_INVALID


def test_gradcheck_pass_and_fail(capsys):
    assert main(["gradcheck", "--seeds", "0"]) == EXIT_OK
    assert main(["gradcheck", "--seeds", "0", "--tol", "0"]) == EXIT_CHECK
    assert "FAIL" in capsys.readouterr().out


def test_train_tiny(scen, tmp_path):
    out = tmp_path / "tr"
    assert main(["train", "--scenario", scen, "--episodes", "2", "--out", str(out)]) == EXIT_OK
    assert (out / "g3m.json").exists() and (out / "trace.csv").exists()
    code = main(["run", "--scenario", scen, "--l1", "g3m", "--checkpoint", str(out / "g3m"),
                 "--out", str(tmp_path / "o")])
    assert code == EXIT_OK


def test_unknown_subcommand():
    with pytest.raises(SystemExit) as exc:
        main(["fly"])
    assert exc.value.code == 2
