import json

import pytest

from eimstore.calibrate import simulate_ou_series, write_price_csv
from eimstore.cli import main, parse_grid, UsageError


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def fig1(tmp_path):
    model = write(tmp_path / "m.json", {"type": "ou", "theta": 3.42, "mu": 47.66, "sigma": 30.65, "time_unit": "day"})
    contract = write(tmp_path / "c.json", {"x_star": 60, "p_c": 10, "K_c": 40, "rate": 0.03, "time_unit": "day"})
    return model, contract


@pytest.fixture
def fitted(tmp_path):
    model = write(tmp_path / "fm.json", {"type": "ou", "theta": 68.69, "mu": 30.99, "sigma": 483.33, "time_unit": "day"})
    contract = write(tmp_path / "fc.json", {"x_star": 50, "p_c": 10, "K_c": 10, "rate": 0.03, "time_unit": "year"})
    return model, contract


def test_grid_parsing():
    assert list(parse_grid("1,2,3")) == [1.0, 2.0, 3.0]
    assert list(parse_grid("0:1:3")) == [0.0, 0.5, 1.0]
    for bad in ("", " , ", "1:2", "a,b"):
        with pytest.raises(UsageError):
            parse_grid(bad)


def test_calibrate(tmp_path, capsys):
    csv = tmp_path / "p.csv"
    write_price_csv(csv, simulate_ou_series(68.69, 30.99, 483.33, 1 / 365.25, 400, seed=1))
    out = tmp_path / "fit.json"
    assert main(["calibrate", "--input", str(csv), "--time-unit", "year", "--output", str(out)]) == 0
    fit = json.loads(out.read_text())
    assert fit["theta"] > 0 and fit["model"]["type"] == "ou"
    assert json.loads((tmp_path / "fit.json.manifest.json").read_text())["command"] == "calibrate"
    bad = tmp_path / "bad.csv"
    bad.write_text("timestamp,price\n2012-06-01,1\n2012-13-45,2\n")
    assert main(["calibrate", "--input", str(bad)]) == 2
    assert "row 3" in capsys.readouterr().err
    assert main(["calibrate", "--input", str(csv), "--lo", "150", "--hi", "-150"]) == 64


def test_value_case_a_and_byte_stability(fig1, tmp_path):
    m, c = fig1
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["value", "--model", m, "--contract", c, "--mode", "single", "--output", str(a)]) == 0
    assert main(["value", "--model", m, "--contract", c, "--mode", "single", "--output", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    doc = json.loads(a.read_text())
    assert doc["result"]["case"] == "A" and doc["sustainability"]["S2_star"]


def test_value_case_c(tmp_path, capsys):
    m = write(tmp_path / "m.json", {"type": "neg_gbm", "mu": 0.06, "sigma": 0.3, "time_unit": "year"})
    c = write(tmp_path / "c.json", {"x_star": -1, "p_c": -3, "K_c": 1, "rate": 0.04, "time_unit": "year"})
    assert main(["value", "--model", m, "--contract", c, "--mode", "single", "--force"]) == 0
    assert json.loads(capsys.readouterr().out)["result"] == {"case": "C", "value": "infinite"}


def test_value_force(fig1, tmp_path, capsys):
    m, _ = fig1
    c = write(tmp_path / "c2.json", {"x_star": 60, "p_c": 30, "K_c": 40, "rate": 0.03})
    assert main(["value", "--model", m, "--contract", c]) == 2
    capsys.readouterr()
    assert main(["value", "--model", m, "--contract", c, "--mode", "single", "--force"]) == 0
    assert json.loads(capsys.readouterr().out)["sustainability"]["S2_star"] is False


def test_value_verify_round_trip(fitted, tmp_path, capsys):
    m, c = fitted
    out = tmp_path / "sol.json"
    assert main(["value", "--model", m, "--contract", c, "--output", str(out)]) == 0
    assert main(["verify", "--solution", str(out)]) == 0
    assert json.loads(capsys.readouterr().out)["ok"] is True
    doc = json.loads(out.read_text())
    doc["result"]["y_star"] *= 1.01
    out.write_text(json.dumps(doc))
    assert main(["verify", "--solution", str(out)]) == 3


def test_sweep_premium_grid(fitted, tmp_path):
    m, c = fitted
    out = tmp_path / "s.csv"
    args = ["sweep", "--model", m, "--contract", c, "--axis", "total_premium", "--grid", "20,30,40,50",
            "--x-star-grid", "50,75,100", "--output", str(out)]
    assert main(args) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 13
    # p_c + K_c = x_star sits on the boundary and is reported, not solved
    assert lines[4].endswith("excluded")
    again = tmp_path / "s2.csv"
    assert main(args[:-1] + [str(again), "--workers", "2"]) == 0
    assert again.read_bytes() == out.read_bytes()
    assert main(["sweep", "--model", m, "--contract", c, "--axis", "split", "--grid", ""]) == 64


def test_sweep_threshold_unimodal(fig1, capsys):
    m, c = fig1
    assert main(["sweep", "--model", m, "--contract", c, "--axis", "threshold", "--grid=-40:50:91"]) == 0
    rows = capsys.readouterr().out.splitlines()[1:]
    vals = [float(r.split(",")[5]) for r in rows]
    k = vals.index(max(vals))
    assert 0 < k < len(vals) - 1
    assert all(b > a for a, b in zip(vals[:k], vals[1:k + 1]))
    assert all(b < a for a, b in zip(vals[k:], vals[k + 1:]))


def test_simulate_exit_codes(fig1, capsys):
    m, c = fig1
    assert main(["simulate", "--model", m, "--contract", c, "--n-paths", "20000"]) == 0
    assert main(["simulate", "--model", m, "--contract", c, "--n-paths", "20000", "--reference", "30"]) == 3
    assert main(["simulate", "--model", m, "--contract", c, "--n-paths", "1"]) == 64


def test_usage_errors():
    with pytest.raises(SystemExit) as e:
        main(["nonsense"])
    assert e.value.code == 64
    with pytest.raises(SystemExit) as e:
        main(["value", "--model", "x.json"])
    assert e.value.code == 64


def test_missing_file_is_data_error(tmp_path):
    assert main(["value", "--model", str(tmp_path / "none.json"), "--contract", str(tmp_path / "none.json")]) == 2
