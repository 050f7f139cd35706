import csv
import io
import json

import numpy as np
import pytest

from roughfilm.cli import dumps, run
from roughfilm.config import Config, ConfigError, default_config, load_config
from roughfilm.profiles import GeometryError

SINE_1D = {
    "geometry": {"f1": {"kind": "sine2_1d"}, "f2": {"kind": "sine2_1d", "offset": 0.5},
                 "parallel_offset": 0.5},
    "mesh": {"n_h": 16, "n_v": 8, "order": 4},
}


def invoke(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def write_config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def all_numbers(obj):
    if isinstance(obj, dict):
        for v in obj.values():
            yield from all_numbers(v)
    elif isinstance(obj, list):
        for v in obj:
            yield from all_numbers(v)
    elif isinstance(obj, (int, float)) and not isinstance(obj, bool):
        yield obj


def test_config_round_trip(tmp_path):
    data = json.loads(json.dumps(SINE_1D))
    data["rules"] = {"cell_rule": {"n": 12}, "validator": {"n_rel": 10}}
    data["params"] = {"d": 0.25}
    data["output"] = {"format": "csv", "path": "out.json"}
    cfg = Config.from_dict(data)
    again = Config.from_dict(json.loads(cfg.dumps()))
    assert again == cfg
    assert again.dumps() == cfg.dumps()
    assert cfg.rules.cell_rule.n == 12 and cfg.mesh.n_h == 16 and cfg.d == 0.25
    assert Config.from_dict(default_config().to_dict()) == default_config()


def test_load_config_from_file(tmp_path):
    grid = np.random.default_rng(3).uniform(0, 0.2, size=(8, 8))
    np.savetxt(tmp_path / "rough.csv", grid, delimiter=",")
    path = write_config(tmp_path, {"geometry": {"f1": {"kind": "sampled", "grid_path": "rough.csv"},
                                                "f2": {"kind": "constant", "value": 1.0}}})
    geom = load_config(path).build_geometry()
    assert geom.f1(np.array([0.0, 0.0])) == pytest.approx(grid[0, 0], abs=1e-12)


@pytest.mark.parametrize("bad", [
    {"extra": {}},
    {"geometry": {"f3": {"kind": "constant"}}},
    {"geometry": {"f1": {"kind": "constant", "value": 0.0, "colour": 1}}},
    {"rules": {"cell_rule": {"m": 3}}},
    {"rules": {"quadrature": {}}},
    {"mesh": {"n_h": 30, "order": 4}},
    {"params": {"d": -1.0}},
    {"output": {"format": "xml"}},
    {"geometry": {"omega": [0, 1, 0]}},
])
def test_config_rejects_invalid(bad):
    with pytest.raises(ConfigError):
        Config.from_dict(bad)


def test_misordered_geometry_rejected_at_load(tmp_path):
    data = {"geometry": {"f1": {"kind": "sine2_2d"}, "f2": {"kind": "constant", "value": 0.5}}}
    with pytest.raises(GeometryError, match=r"0\.5, 0\.5"):
        Config.from_dict(data)
    code, out, err = invoke("ahom", "--config", write_config(tmp_path, data))
    assert code == 2 and out == ""
    assert "(0.5, 0.5)" in err


def test_exit_codes(tmp_path):
    assert invoke("frobnicate")[0] == 1
    assert invoke()[0] == 1
    assert invoke("ghom", "--field", "x.csv")[0] == 2
    assert invoke("ghom", "--xi", "1,2,3")[0] == 2
    assert invoke("gamma-sweep", "--m", "0,0,0")[0] == 2
    assert invoke("ahom", "--config", str(tmp_path / "missing.json"))[0] == 2
    bad_json = tmp_path / "broken.json"
    bad_json.write_text("{", encoding="utf-8")
    assert invoke("ahom", "--config", str(bad_json))[0] == 2
    assert invoke("ahom", "--threads", "0")[0] == 2
    cap = {"geometry": SINE_1D["geometry"],
           "mesh": {"n_h": 16, "n_v": 8, "order": 2, "max_iter": 2, "preconditioner": "jacobi"}}
    code, _, err = invoke("ghom", "--config", write_config(tmp_path, cap, "cap.json"))
    assert code == 3 and "residual" in err


def test_parallel_flag_needs_offset(tmp_path):
    data = {"geometry": {"f1": {"kind": "sine2_1d"}, "f2": {"kind": "sine2_2d", "offset": 1.5}}}
    code, _, err = invoke("ahom", "--parallel", "--config", write_config(tmp_path, data))
    assert code == 2 and "--parallel" in err


def test_ahom_report_and_csv(tmp_path):
    path = tmp_path / "a.csv"
    code, out, _ = invoke("ahom", "--csv", str(path))
    assert code == 0
    rep = json.loads(out)
    assert np.linalg.norm(np.array(rep["total"]) - np.diag([0, 0, 1.0])) < 1e-3
    assert rep["formula_used"] == "parallel" and rep["degenerate"]
    rows = list(csv.reader(path.open()))
    assert rows[0][0] == "matrix" and rows[1][0] == "total" and len(rows[1]) == 10
    assert float(rows[1][9]) == pytest.approx(rep["total"][2][2], rel=1e-15)


def test_output_is_deterministic_and_finite(tmp_path):
    cfg = write_config(tmp_path, SINE_1D)
    first = invoke("ahom", "--config", cfg)[1]
    assert invoke("ahom", "--config", cfg, "--threads", "3")[1] == first
    assert all(np.isfinite(v) for v in all_numbers(json.loads(first)))
    with pytest.raises(ArithmeticError):
        dumps({"x": float("nan")})


def test_output_path_receives_report(tmp_path):
    target = tmp_path / "report.json"
    code, out, _ = invoke("easy-axis", "--config",
                          write_config(tmp_path, {"output": {"path": str(target)}}))
    assert code == 0 and target.read_text(encoding="utf-8") == out


def test_output_csv_format(tmp_path):
    target = tmp_path / "report.csv"
    cfg = write_config(tmp_path, {"output": {"format": "csv", "path": str(target)}})
    code, out, _ = invoke("easy-axis", "--config", cfg)
    rows = dict(csv.reader(target.open()))
    assert code == 0 and rows.pop("key") == "value"
    assert float(rows["axis.0"]) == json.loads(out)["axis"][0]
    assert rows["degenerate"] == "True"
    bad = write_config(tmp_path, {"output": {"path": str(tmp_path / "no" / "dir.json")}}, "bad.json")
    assert invoke("easy-axis", "--config", bad)[0] == 2


def test_easy_axis_command():
    code, out, _ = invoke("easy-axis")
    rep = json.loads(out)
    assert code == 0
    assert rep["energy"] == pytest.approx(0.0, abs=1e-3) and rep["degenerate"]
    assert not rep["perpendicular"]


def test_ghom_command_with_corrector(tmp_path):
    field = tmp_path / "phi.csv"
    code, out, _ = invoke("ghom", "--config", write_config(tmp_path, SINE_1D),
                          "--xi", "1,0,0,1,0.5,-0.5", "--field", str(field))
    assert code == 0
    rep = json.loads(out)
    G = np.array(rep["G"])
    assert G[1, 1] == pytest.approx(0.5, abs=1e-6) and G[0, 0] < 0.5
    assert rep["xi"]["energy"] == pytest.approx(rep["xi"]["reconstructed"], abs=1e-6 * 3.5)
    rows = list(csv.reader(field.open()))
    assert rows[0] == ["i", "j", "k", "y1", "y2", "y3", "phi1", "phi2", "phi3"]
    assert len(rows) - 1 == 16 * 16 * (8 + 1)


def test_energy_command(tmp_path):
    path = tmp_path / "m.csv"
    with path.open("w") as fh:
        fh.write("x_index,y_index,m1,m2,m3\n")
        for i in range(4):
            for j in range(4):
                fh.write(f"{i},{j},0,0.6,0.8\n")
    code, out, _ = invoke("energy", "--field", str(path))
    assert code == 0
    rep = json.loads(out)
    assert rep["exchange_term"] == 0.0
    assert rep["total"] == pytest.approx(0.64, abs=1e-3)
    assert invoke("energy", "--field", str(tmp_path / "nope.csv"))[0] == 2


def test_gamma_sweep_command(tmp_path):
    path = tmp_path / "sweep.csv"
    code, out, _ = invoke("gamma-sweep", "--m", "0,0,2", "--eps", "0.25,0.125,0.0625", "--csv", str(path))
    assert code == 0
    rep = json.loads(out)
    assert rep["m"] == [0.0, 0.0, 1.0] and rep["extrapolation_model"] == "eps_log_eps"
    errs = [r["abs_error"] for r in rep["records"]]
    assert errs == sorted(errs, reverse=True)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["eps", "I_eps", "target", "abs_error", "rel_error"]
    assert [float(r[0]) for r in rows[1:]] == [0.25, 0.125, 0.0625]
    assert invoke("gamma-sweep", "--m", "0,0,1", "--eps", "0.125,0.25")[0] == 2
