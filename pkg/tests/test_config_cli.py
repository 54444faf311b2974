import csv
import json

import numpy as np
import pytest
import yaml

from ftlnet import cli, config, experiments
from ftlnet.bridge import read_profiles

SMALL = {
    "name": "small-merge",
    "mode": "compare",
    "final_time": 200,
    "network": {
        "roads": {1: 400, 2: 400, 3: 400},
        "junctions": [
            {"id": "o1", "inc": [], "out": [1]},
            {"id": "o2", "inc": [], "out": [2]},
            {"id": "J", "inc": [1, 2], "out": [3]},
            {"id": "d", "inc": [3], "out": []},
        ],
    },
    "initial_density": {1: [[0, 400, 0.5]], 2: [[0, 400, 0.3]]},
    "micro": {"ell": 1.0, "dt": 0.5, "seed": 1},
    "macro": {"cells_per_road": 10, "dt": 10.0},
    "convergence": {"ladder": [[4, 2], [1, 0.5]]},
}


def write(tmp_path, data, name="c.yaml"):
    f = tmp_path / name
    f.write_text(yaml.safe_dump(data))
    return f


def variant(**changes):
    d = json.loads(json.dumps(SMALL))
    for k, v in changes.items():
        d[k] = v
    d["network"]["roads"] = {int(k): v for k, v in d["network"]["roads"].items()}
    d["initial_density"] = {int(k): v for k, v in d["initial_density"].items()}
    return d


def test_round_trip(tmp_path):
    cfg = config.from_dict(variant())
    out = tmp_path / "back.yaml"
    cfg.dump(out)
    assert config.load(out) == cfg


@pytest.mark.parametrize("name", ["merge", "diverge", "cross2x2", "riemann_shock",
                                  "riemann_rarefaction"])
def test_bundled_configs_round_trip(tmp_path, name):
    cfg = config.load(config.bundled(name))
    cfg.dump(tmp_path / "x.yaml")
    assert config.load(tmp_path / "x.yaml") == cfg


def test_bundled_values():
    cfg = config.load(config.bundled("cross2x2"))
    assert cfg.final_time == 4000 and cfg.dx == 40.0
    assert cfg.micro.ell == 0.25 and cfg.micro.dt == 0.1
    assert cfg.turning == {(1, 3): 0.7, (1, 4): 0.3, (2, 3): 0.6, (2, 4): 0.4}
    assert cfg.stochastic
    assert not config.load(config.bundled("merge")).stochastic


@pytest.mark.parametrize("change", [
    {"final_time": -1},
    {"micro": {"dt": 0.5}},
    {"micro": {"ell": 1.0, "n": 10, "dt": 0.5}},
    {"micro": {"ell": -1.0, "dt": 0.5}},
    {"macro": {"dt": 10.0}},
    {"mode": "fly"},
    {"initial_density": {9: [[0, 1, 0.5]]}},
    {"turning": [{"from": 1, "to": 9, "p": 1.0}]},
])
def test_invalid_configs(change):
    with pytest.raises(config.ConfigError):
        config.from_dict(variant(**change))


def test_validate_exit_codes(tmp_path, capsys):
    assert cli.main(["validate", "--config", str(write(tmp_path, variant()))]) == 0
    assert "small-merge: ok" in capsys.readouterr().out
    # macro CFL violation only shows up once objects are built
    bad = write(tmp_path, variant(macro={"cells_per_road": 10, "dt": 50.0}), "bad.yaml")
    assert cli.main(["validate", "--config", str(bad)]) != 0
    assert "CFL" in capsys.readouterr().err
    bad = write(tmp_path, variant(initial_density={1: [[0, 400, 1.5]]}), "bad2.yaml")
    assert cli.main(["validate", "--config", str(bad)]) != 0
    assert cli.main(["validate", "--config", "no-such-config"]) != 0


def test_cli_run_micro_outputs(tmp_path):
    out = tmp_path / "m"
    rc = cli.main(["run-micro", "--config", str(write(tmp_path, variant())), "--out", str(out),
                   "--snapshot", "100", "--trajectories", "--seed", "5"])
    assert rc == 0
    summary = json.loads((out / "micro_summary.json").read_text())
    assert summary["seed"] == 5 and summary["count_conserved"]
    assert summary["vehicles"] == summary["active"] + summary["arrived"] == 320
    assert (out / "micro_profile_t100.csv").exists()
    prof = read_profiles(out / "micro_profile.csv")
    assert sorted(prof) == [1, 2, 3] and len(prof[1].values) == 10
    with open(out / "trajectories.csv") as fh:
        head = next(csv.reader(fh))
    assert head == ["step", "time", "label", "path_id", "path_coordinate", "active"]


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.SEED_ENV, "9")
    out = tmp_path / "m"
    assert cli.main(["run-micro", "--config", str(write(tmp_path, variant())),
                     "--out", str(out)]) == 0
    assert json.loads((out / "micro_summary.json").read_text())["seed"] == 9


def test_cli_compare_and_converge(tmp_path, capsys):
    f = str(write(tmp_path, variant()))
    assert cli.main(["compare", "--config", f, "--out", str(tmp_path / "c")]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert [x.split(",")[0] for x in lines] == ["1", "2", "3", "total"]
    rows = list(csv.DictReader(open(tmp_path / "c" / "compare.csv")))
    assert [r["road_id"] for r in rows] == ["1", "2", "3", "total"]
    assert cli.main(["converge", "--config", f, "--out", str(tmp_path / "v")]) == 0
    table = list(csv.DictReader(open(tmp_path / "v" / "convergence.csv")))
    assert [float(r["ell_n"]) for r in table] == [4.0, 1.0]
    assert all(r["seeds"] == "1" for r in table)
    # ten cells per road is too coarse for the ordering to mean anything here
    assert all(float(r["mean_L1"]) > 0 and float(r["std_L1"]) == 0 for r in table)


def test_cli_run_macro(tmp_path):
    out = tmp_path / "M"
    assert cli.main(["run-macro", "--config", str(write(tmp_path, variant())),
                     "--out", str(out)]) == 0
    summary = json.loads((out / "macro_summary.json").read_text())
    assert summary["max_relative_mass_drift"] < 1e-12
    assert summary["max_total_density"] <= 1 + 1e-12


def test_zero_final_time_returns_initial_state():
    cfg = config.from_dict(variant(final_time=0))
    mac = experiments.run_macro(cfg)
    np.testing.assert_allclose(mac.profiles[1].values, 0.5)
    np.testing.assert_allclose(mac.profiles[3].values, 0.0)
    mic = experiments.run_micro(cfg)
    # first cell of road 1 misses the vehicle sitting at x=0 of the next cell
    np.testing.assert_allclose(mic.profiles[1].values[1:], 0.5)
    assert mic.state.steps == 0


def test_empty_network_gives_zero_profiles_and_zero_l1():
    cfg = config.from_dict(variant(initial_density={}))
    table = experiments.run_compare(cfg)
    assert all(v == 0.0 for v in table.values())


def test_compare_reproducible():
    cfg = config.from_dict(variant())
    assert experiments.run_compare(cfg) == experiments.run_compare(cfg)


def test_stochastic_convergence_reports_spread():
    d = variant(
        network={"roads": {1: 400, 2: 400, 3: 400},
                 "junctions": [{"id": "o", "inc": [], "out": [1]},
                               {"id": "J", "inc": [1], "out": [2, 3]},
                               {"id": "d2", "inc": [2], "out": []},
                               {"id": "d3", "inc": [3], "out": []}]},
        initial_density={1: [[0, 400, 0.5]]},
        turning=[{"from": 1, "to": 2, "p": 0.8}, {"from": 1, "to": 3, "p": 0.2}])
    d["network"]["roads"] = {1: 400, 2: 400, 3: 400}
    cfg = config.from_dict(d)
    rows = experiments.run_convergence(cfg, ladder=[(2.0, 1.0)], seeds=4)
    assert len(rows) == 1 and rows[0]["seeds"] == 4 and rows[0]["std_L1"] > 0
