import io
import json
import math
from pathlib import Path

import pytest

from synricci import __version__
from synricci.cli import EXIT_CONFIDENCE, EXIT_INPUT, EXIT_OK, run

DATA = Path(__file__).parent / "data"


def call(*argv):
    buf = io.StringIO()
    code = run([str(a) for a in argv], stdout=buf)
    text = buf.getvalue()
    return code, (json.loads(text) if text else None), text


def test_report_envelope():
    code, rep, _ = call("validate", "--space", DATA / "c6.csv")
    assert code == EXIT_OK
    assert rep["command"] == "validate" and rep["version"] == __version__
    assert rep["result"] == {"n": 6, "valid": True, "problems": []}
    assert rep["config"]["seed"] == 0


def test_validate_bad_space_exits_2(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("0,1,5\n1,0,1\n5,1,0\n0.5,0.5,0.5\n")
    code, rep, _ = call("validate", "--space", bad)
    assert code == EXIT_INPUT


def test_missing_file_exits_2(tmp_path):
    code, rep, _ = call("validate", "--space", tmp_path / "nope.csv")
    assert code == EXIT_INPUT and rep is None


def test_space_and_model_are_exclusive():
    code, _, _ = call("validate", "--space", DATA / "c6.csv", "--model", DATA / "circle.toml")
    assert code == EXIT_INPUT


def test_argparse_error_exits_2():
    assert call("theta", "--model", DATA / "circle.toml", "--pair", "0")[0] == EXIT_INPUT
    assert call("theta", "--model", DATA / "circle.toml", "--pair", "0,4", "--tgrid", "cubic:1")[0] == EXIT_INPUT


def test_config_error_names_the_line(tmp_path, capsys):
    cfg = tmp_path / "m.toml"
    cfg.write_text('kind = "circle"\n# comment\nradius = -2\nresolution = 64\n')
    code, _, _ = call("validate", "--model", cfg)
    assert code == EXIT_INPUT
    assert f"{cfg}:3" in capsys.readouterr().err


def test_theta_with_grid_and_csv(tmp_path):
    out = tmp_path / "curve.csv"
    code, rep, _ = call(
        "theta", "--model", DATA / "circle.toml", "--pair", "120,136",
        "--tgrid", "geometric:2e-3,1e-1,6", "--csv", out,
    )
    assert code == EXIT_OK
    res = rep["result"]
    assert res["t_grid"] == pytest.approx(rep["config"]["tgrid"])
    assert res["dropped_times"] == []
    lines = out.read_text().splitlines()
    assert lines[0] == "t,W,raw_quotient" and len(lines) == 7
    t, W, q = map(float, lines[3].split(","))
    assert q == pytest.approx(-math.log(W / res["d"]) / t)
    assert res["bounds"]["lower"] - 0.05 <= res["value"] <= res["bounds"]["upper"] + 0.05


def test_theta_drops_times_outside_window(caplog):
    # 1e-3 sits below 2 h^2 at resolution 256
    code, rep, _ = call("theta", "--model", DATA / "circle.toml", "--pair", "0,40",
                        "--tgrid", "geometric:1e-3,1e-1,8")
    assert code == EXIT_OK
    assert rep["result"]["dropped_times"] == [1e-3]
    assert len(rep["result"]["t_grid"]) == 7


def test_theta_grid_fully_outside_window_exits_2():
    code, _, _ = call("theta", "--model", DATA / "circle.toml", "--pair", "0,4", "--tgrid", "list:0.5,0.9")
    assert code == EXIT_INPUT


def test_theta_index_out_of_range():
    assert call("theta", "--model", DATA / "circle.toml", "--pair", "0,999")[0] == EXIT_INPUT


def test_theta_needs_edges():
    assert call("theta", "--space", DATA / "c6.csv", "--pair", "0,3")[0] == EXIT_INPUT


def test_resolution_override():
    code, rep, _ = call("validate", "--model", DATA / "circle.toml", "--resolution", "32")
    assert code == EXIT_OK and rep["result"]["n"] == 32


def test_theta_star():
    code, rep, _ = call("theta-star", "--model", DATA / "circle.toml", "--resolution", "128",
                        "--center", "64", "--radii", "0.3,0.15")
    assert code in (EXIT_OK, EXIT_CONFIDENCE)
    assert rep["result"]["value"] == pytest.approx(0.5, abs=0.1)


def test_sturm_verify_inside():
    code, rep, _ = call("sturm-verify", "--model", DATA / "circle.toml", "--pair", "100,110", "--pair", "10,20")
    assert code == EXIT_OK
    assert rep["result"]["all_inside"] and len(rep["result"]["pairs"]) == 2


def test_sturm_verify_outside_exits_3():
    code, rep, _ = call("sturm-verify", "--model", DATA / "circle.toml", "--pair", "100,110", "--tol", "1e-9")
    assert code == EXIT_CONFIDENCE
    assert rep["result"]["all_inside"] is False


def test_sturm_verify_needs_model():
    assert call("sturm-verify", "--space", DATA / "c6.csv", "--edges", DATA / "c6_edges.csv",
                "--pair", "0,2")[0] == EXIT_INPUT


def test_iso_group_c6():
    code, rep, _ = call("iso-group", "--space", DATA / "c6.csv")
    assert code == EXIT_OK
    assert rep["result"]["order"] == 12


def test_iso_group_cover_collision_exits_3():
    # quarter-diameter cover of C12 exceeds the rigidity scale
    code, rep, _ = call("iso-group", "--space", DATA / "c12.csv", "--cover", "1.5")
    assert code == EXIT_CONFIDENCE
    assert rep["result"]["pigeonhole"]["injective"] is False


def test_iso_group_fine_cover_is_injective():
    code, rep, _ = call("iso-group", "--space", DATA / "c12.csv", "--cover", "0.2")
    assert code == EXIT_OK
    pig = rep["result"]["pigeonhole"]
    assert pig["injective"] and pig["order_within_bound"]


def test_bochner_bound():
    code, rep, _ = call("bochner-bound", "--budget", DATA / "budget.toml")
    assert code == EXIT_OK
    res = rep["result"]["group_order"]
    assert res["delta"] == pytest.approx(math.atan(0.25))
    assert res["L"] == 872 and res["L1"] == math.factorial(872)
    assert rep["config"]["budget_config"]["n"] == "3"


def test_bochner_bound_weighted_variant(tmp_path):
    cfg = tmp_path / "b.toml"
    cfg.write_text((DATA / "budget.toml").read_text() + "delta1 = 0.01\nC_G = 2\n")
    code, rep, _ = call("bochner-bound", "--budget", cfg)
    assert code == EXIT_OK
    assert rep["result"]["weighted"]["delta"] == pytest.approx(0.01)


def test_bochner_bound_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "b.toml"
    cfg.write_text((DATA / "budget.toml").read_text() + "Lambda4 = 1\n")
    assert call("bochner-bound", "--budget", cfg)[0] == EXIT_INPUT
    assert "Lambda4" in capsys.readouterr().err


def test_cd_check():
    args = ("cd-check", "--model", DATA / "circle.toml", "--resolution", "128", "--pair", "120,8",
            "--ts", "0,0.25,0.5,0.75,1", "--smooth", "0.01")
    code, rep, _ = call(*args, "--K", "-0.5")
    assert code == EXIT_OK and rep["result"]["passed"]
    code, rep, _ = call(*args, "--K", "0.6")
    assert code == EXIT_OK and not rep["result"]["passed"]


def test_output_is_deterministic(tmp_path):
    args = ("theta", "--model", DATA / "circle.toml", "--resolution", "128", "--pair", "10,20")
    assert call(*args)[2] == call(*args)[2]
    out = tmp_path / "r.json"
    assert call(*args, "--out", out)[0] == EXIT_OK
    assert json.loads(out.read_text())["result"] == call(*args)[1]["result"]


def test_version_flag(capsys):
    assert run(["--version"]) == 0
    assert __version__ in capsys.readouterr().out
