import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import random_operator
from opcalc.cli import main
from opcalc.io import load_operator, read_json, save_operator
from opcalc.linalg import BlockOperator, uniform_norm
from opcalc.scenario import generate_instance


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def pair(tmp_path):
    assert main(["gen", "--seed", "5", "--dims", "3:1.0,2:0.5", "--out-h", str(tmp_path / "h.json"),
                 "--out-v", str(tmp_path / "v.json")]) == 0
    return tmp_path / "h.json", tmp_path / "v.json"


@pytest.fixture
def canonical(tmp_path):
    save_operator(tmp_path / "h0.json", BlockOperator.diag([0.0]))
    save_operator(tmp_path / "v1.json", BlockOperator.diag([1.0]))
    return tmp_path / "h0.json", tmp_path / "v1.json"


def test_gen_deterministic(tmp_path, pair):
    h, v = pair
    main(["gen", "--seed", "5", "--dims", "3:1.0,2:0.5", "--out-h", str(tmp_path / "h2.json"),
          "--out-v", str(tmp_path / "v2.json")])
    assert h.read_bytes() == (tmp_path / "h2.json").read_bytes()
    assert v.read_bytes() == (tmp_path / "v2.json").read_bytes()
    H, _ = generate_instance(5, [(3, 1.0), (2, 0.5)])
    assert uniform_norm(load_operator(h) - H) == 0.0


@pytest.mark.parametrize("path", ["spectral", "fourier"])
def test_moi_subcommand(tmp_path, pair, path):
    req = {"order": 1, "operators": [pair[0].name, pair[0].name], "directions": [pair[1].name],
           "kernel": {"divided_difference_of": {"family": "sine", "params": {"a": 1.0}}}}
    (tmp_path / "req.json").write_text(json.dumps(req))
    out = tmp_path / f"{path}.json"
    assert main(["moi", "--request", str(tmp_path / "req.json"), "--path", path, "--out", str(out)]) == 0
    data = read_json(out)
    assert data["path"].startswith(path) and len(data["blocks"]) == 2


def test_moi_paths_agree(tmp_path, pair):
    req = {"order": 1, "operators": [pair[0].name, pair[0].name], "directions": [pair[1].name],
           "kernel": {"divided_difference_of": {"family": "gaussian", "params": {"sigma": 1.0}}}}
    (tmp_path / "req.json").write_text(json.dumps(req))
    vals = []
    for path in ("spectral", "fourier"):
        main(["moi", "--request", str(tmp_path / "req.json"), "--path", path, "--out", str(tmp_path / "o.json")])
        vals.append(load_operator(tmp_path / "o.json", hermitian=False))
    assert uniform_norm(vals[0] - vals[1]) <= 1e-6


def test_shift_canonical_plateau(tmp_path, canonical):
    out = tmp_path / "xi.csv"
    assert main(["shift", "--H", str(canonical[0]), "--V", str(canonical[1]), "--grid=-1:2:7", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["lambda", "xi"]
    table = {float(a): float(b) for a, b in rows[1:]}
    assert table == {-1.0: 0.0, -0.5: 0.0, 0.0: 1.0, 0.5: 1.0, 1.0: 0.0, 1.5: 0.0, 2.0: 0.0}


def test_shift_with_average(tmp_path, canonical):
    out = tmp_path / "xi.csv"
    main(["shift", "--H", str(canonical[0]), "--V", str(canonical[1]), "--grid=-0.5:1.5:5", "--out", str(out), "--avg"])
    rows = read_csv(out)
    assert rows[0] == ["lambda", "xi", "Xi"]
    xi_int = [0.0, 0.5, 0.5, 0.0]
    for row, expected in zip(rows[1:], xi_int):
        assert float(row[2]) == pytest.approx(expected, abs=1e-9)
    assert rows[-1][2] == ""


def test_flow_subcommand(tmp_path, pair):
    out = tmp_path / "flow.csv"
    assert main(["flow", "--D0", str(pair[0]), "--V", str(pair[1]), "--mu-grid=-3:3:25", "--epsilon", "0.5",
                 "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["mu", "sf_counting", "sf_partition", "sf_cp", "xi", "kernel_corr"]
    for r in rows[1:]:
        assert r[1] == r[2] == r[4]
        assert abs(float(r[3]) - float(r[1])) <= 1e-6


def test_flow_collision_rows_blank(tmp_path):
    save_operator(tmp_path / "d0.json", BlockOperator.diag([-1.0]))
    save_operator(tmp_path / "v.json", BlockOperator.diag([2.0]))
    out = tmp_path / "flow.csv"
    main(["flow", "--D0", str(tmp_path / "d0.json"), "--V", str(tmp_path / "v.json"), "--mu-grid=-1:1:3", "--out", str(out)])
    rows = read_csv(out)[1:]
    assert rows[0][1] == "" and rows[0][5] == "-0.5"
    assert rows[1][1] == "1.0"


def test_calculus_subcommand(tmp_path):
    cfg = {"seed": 3, "dims": [[3, 1.0]], "instances": 2, "function_specs": [{"family": "sine", "params": {"a": 1.0}}]}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    for check in ("dk", "frechet", "taylor", "duhamel"):
        rep = tmp_path / f"{check}.json"
        assert main(["calculus", "--check", check, "--corpus", str(tmp_path / "c.json"), "--report", str(rep)]) == 0
        rows = read_json(rep)["results"]
        assert rows and all(r["check"] == check and r["pass"] for r in rows)


def test_verify_empty_and_failure(tmp_path):
    (tmp_path / "empty.json").write_text(json.dumps({"checks": []}))
    assert main(["verify", "--config", str(tmp_path / "empty.json"), "--report", str(tmp_path / "r.json")]) == 0
    assert read_json(tmp_path / "r.json")["results"] == []
    cfg = {"checks": ["krein"], "function_specs": [{"family": "sine", "params": {"a": 1.0}}], "tolerances": {"krein": 1e-300}}
    (tmp_path / "strict.json").write_text(json.dumps(cfg))
    assert main(["verify", "--config", str(tmp_path / "strict.json")]) == 1


def test_verify_non_hermitian_input(tmp_path, rng, capsys):
    save_operator(tmp_path / "h.json", random_operator(rng, hermitian=False))
    save_operator(tmp_path / "v.json", random_operator(rng))
    cfg = {"checks": ["krein"], "instances": 0, "operators": [{"H": "h.json", "V": "v.json"}],
           "function_specs": [{"family": "sine", "params": {"a": 1.0}}]}
    (tmp_path / "bad.json").write_text(json.dumps(cfg))
    assert main(["verify", "--config", str(tmp_path / "bad.json")]) == 2
    assert "NotHermitian" in capsys.readouterr().err


def test_missing_file(tmp_path):
    assert main(["shift", "--H", str(tmp_path / "nope.json"), "--V", str(tmp_path / "nope.json"),
                 "--grid", "0:1:3", "--out", str(tmp_path / "o.csv")]) == 2


def test_curves_byte_identical(tmp_path):
    cfg = {"seed": 11, "dims": [[3, 1.0], [2, 0.5]], "checks": [], "epsilons": [1.0]}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    for d in ("a", "b"):
        assert main(["verify", "--config", str(tmp_path / "c.json"), "--curves", str(tmp_path / d)]) == 0
    for name in ("xi.csv", "flow.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = read_csv(tmp_path / "a" / "flow.csv")[1:]
    assert all(r[1] == r[4] for r in rows if r[1])


def test_console_script(tmp_path):
    res = subprocess.run([sys.executable, "-m", "opcalc.cli", "gen", "--seed", "1", "--dims", "1:1.0",
                          "--out-h", str(tmp_path / "h.json"), "--out-v", str(tmp_path / "v.json")],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert load_operator(tmp_path / "h.json").dims == (1,)


def test_verify_shipped_config(tmp_path):
    assert main(["verify", "--report", str(tmp_path / "r.json")]) == 0
    report = read_json(tmp_path / "r.json")
    assert report["results"] and all(r["pass"] for r in report["results"])
    assert {r["check"] for r in report["results"]} == {"moi_dual_path", "dk", "frechet", "taylor", "duhamel", "krein",
                                                       "birman_solomyak", "flow_identity"}
