import json

import numpy as np
import pytest

from conftest import random_operator
from opcalc.errors import ConfigParse, KernelDomain, NotHermitian
from opcalc.io import (
    kernel_from_json,
    load_moi_request,
    load_operator,
    operator_from_json,
    operator_to_json,
    save_operator,
)
from opcalc.linalg import eigh, trace_norm, uniform_norm
from opcalc.moi import SeparableKernel, moi_spectral
from opcalc.scenario import ScenarioConfig, generate_instance, parse_grid, run_suite, thread_count


def test_operator_round_trip(tmp_path, rng):
    A = random_operator(rng)
    save_operator(tmp_path / "a.json", A)
    B = load_operator(tmp_path / "a.json")
    assert B.weights == A.weights and B.hermitian_flag
    assert uniform_norm(A - B) == 0.0


@pytest.mark.parametrize("bad", [{}, {"blocks": [{"weight": 1.0}]}, {"blocks": [{"weight": 1.0, "matrix": [[1.0]]}]},
                                 {"blocks": [{"weight": "x", "matrix": [[[1.0, 0.0]]]}]}])
def test_malformed_operator(bad):
    with pytest.raises(ConfigParse):
        operator_from_json(bad)


def test_invalid_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(ConfigParse):
        load_operator(p)


def test_non_hermitian_file(tmp_path, rng):
    save_operator(tmp_path / "n.json", random_operator(rng, hermitian=False))
    with pytest.raises(NotHermitian):
        eigh(load_operator(tmp_path / "n.json"))


def test_generate_instance_deterministic():
    a = generate_instance(42, [(3, 1.0), (2, 0.5)])
    b = generate_instance(42, [(3, 1.0), (2, 0.5)])
    for x, y in zip(a, b):
        assert all(np.array_equal(p, q) for p, q in zip(x.blocks, y.blocks))
    assert json.dumps(operator_to_json(a[0])) == json.dumps(operator_to_json(b[0]))


def test_generate_instance_scalar_and_scaling():
    H, V = generate_instance(7, [(1, 1.0)])
    assert H.blocks[0].shape == (1, 1) and H.blocks[0][0, 0].imag == 0 and V.blocks[0][0, 0].imag == 0
    for seed in range(20):
        _, V = generate_instance(seed, [(4, 1.0), (2, 1 / 3), (1, 2.0)])
        assert trace_norm(V) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ConfigParse):
        generate_instance(0, [])


def test_parse_grid():
    np.testing.assert_array_equal(parse_grid("-1:1:3"), [-1.0, 0.0, 1.0])
    for bad in ["1:2", "a:b:c", "1:0:5", "0:1:1"]:
        with pytest.raises(ConfigParse):
            parse_grid(bad)


def test_moi_request_file(tmp_path):
    H, V = generate_instance(3, [(3, 1.0), (2, 0.5)])
    save_operator(tmp_path / "h.json", H)
    save_operator(tmp_path / "v.json", V)
    req = {"order": 1, "operators": ["h.json", "h.json"], "directions": ["v.json"],
           "kernel": {"divided_difference_of": {"family": "sine", "params": {"a": 1.0}}}}
    (tmp_path / "req.json").write_text(json.dumps(req))
    r = load_moi_request(tmp_path / "req.json")
    assert len(r.operators) == 2 and r.kernel.order == 1
    req["order"] = 2
    (tmp_path / "bad.json").write_text(json.dumps(req))
    with pytest.raises(ConfigParse):
        load_moi_request(tmp_path / "bad.json")
    del req["kernel"]
    req["order"] = 1
    (tmp_path / "bad2.json").write_text(json.dumps(req))
    with pytest.raises(ConfigParse):
        load_moi_request(tmp_path / "bad2.json")


def test_separable_kernel_json(rng):
    k = kernel_from_json({"separable": [{"weight": 2.0, "factors": [{"family": "cosine", "params": {"a": 1.0}}, {"constant": 1.0}]}]})(1)
    assert isinstance(k, SeparableKernel)
    with pytest.raises(ConfigParse):
        kernel_from_json({"separable": [{"factors": []}]})
    with pytest.raises(ConfigParse):
        kernel_from_json({"nothing": 1})


def test_config_validation(tmp_path):
    with pytest.raises(ConfigParse):
        ScenarioConfig.from_json({"checks": ["nope"]})
    with pytest.raises(ConfigParse):
        ScenarioConfig.from_json({"tolerances": {"dk": -1}})
    with pytest.raises(ConfigParse):
        ScenarioConfig.from_json({"dims": []})
    with pytest.raises(ConfigParse):
        ScenarioConfig.from_json({"seed": -1})
    with pytest.raises(ConfigParse):
        ScenarioConfig.from_json({"colour": "blue"})


def test_empty_suite(tmp_path):
    report, status = run_suite(ScenarioConfig.from_json({"checks": []}), tmp_path / "r.json")
    assert status == 0 and report["results"] == []
    assert json.loads((tmp_path / "r.json").read_text())["header"]["rng"].startswith("numpy.random.Generator(PCG64)")


def test_failing_tolerance_sets_status():
    cfg = ScenarioConfig.from_json({"checks": ["dk"], "function_specs": [{"family": "sine", "params": {"a": 1.0}}],
                                    "tolerances": {"dk": 1e-300}})
    report, status = run_suite(cfg)
    assert status == 1 and not any(r["pass"] for r in report["results"])


def test_thread_count(monkeypatch):
    monkeypatch.setenv("OPCALC_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("OPCALC_THREADS", "x")
    with pytest.raises(ConfigParse):
        thread_count()
