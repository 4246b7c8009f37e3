import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nosnet import __version__
from nosnet.cli import main
from nosnet.config import ConfigError, ExperimentConfig, validate_config
from nosnet.graph import CouplingGraph

SMALL = """
graph: {n: 8, p: 0.4, gain: 0.5}
drive: {amplitude: {kind: exponential, value: 0.6}}
run: {horizon: 400, seeds: [1, 2]}
"""


def test_defaults_valid():
    res = validate_config(ExperimentConfig.from_dict({}))
    assert res.ok and res.violations == []


def test_leak_out_of_range():
    cfg = ExperimentConfig.from_dict({"model": {"lambda": 0.5}, "strict_ranges": True})
    res = validate_config(cfg)
    assert not res.ok
    v = [x for x in res.violations if x.field == "model.lambda"][0]
    assert v.value == 0.5 and v.range == (0.10, 0.30)


def test_delay_out_of_range():
    res = validate_config(ExperimentConfig.from_dict({"graph": {"max_delay_ms": 30.0}}))
    assert [v.range for v in res.violations if v.field == "graph.max_delay_ms"] == [(0.0, 25.0)]


def test_explicit_delays_checked():
    W = np.array([[0.0, 1.0], [1.0, 0.0]])
    g = CouplingGraph(W, np.array([[0, 6], [2, 0]]), g=0.5)
    res = validate_config(ExperimentConfig.from_dict({}), graph=g)
    assert any(v.field == "graph.delays_ms" for v in res.violations)


def test_k_net_range():
    res = validate_config(ExperimentConfig.from_dict({"graph": {"rho": 2.0, "gain": 1.0}}))
    assert any(v.field == "graph.k_net" for v in res.violations)


def test_override_checked():
    res = validate_config(ExperimentConfig.from_dict({"model": {"overrides": {3: {"alpha": 2.0}}}}))
    assert [v.field for v in res.violations] == ["model.overrides.3.alpha"]


def test_parse_error_position():
    with pytest.raises(ConfigError) as e:
        ExperimentConfig.from_yaml("model:\n  alpha: 0.7\n  beta: [0.1\n")
    assert e.value.line is not None and e.value.column is not None


def test_unknown_key():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"model": {"alpah": 0.7}})


@settings(max_examples=50, deadline=None)
@given(
    alpha=st.floats(0.4, 1.0),
    lam=st.floats(0.1, 0.3),
    n=st.integers(2, 100),
    seeds=st.lists(st.integers(0, 1000), min_size=1, max_size=4),
    gain=st.integers(0, 10),
)
def test_round_trip(alpha, lam, n, seeds, gain):
    cfg = ExperimentConfig.from_dict({"model": {"alpha": alpha, "lambda": lam}, "graph": {"n": n, "gain": gain},
                                      "run": {"seeds": seeds}})
    again = ExperimentConfig.from_yaml(cfg.to_yaml())
    assert again == cfg and again.data == cfg.data


def test_builders_follow_config():
    cfg = ExperimentConfig.from_yaml(SMALL)
    sc = cfg.sim_config()
    assert sc.graph.n == 8 and sc.graph.g == 0.5 and sc.horizon == 400
    assert cfg.node_params().lam == pytest.approx(0.18)


def _cfg(tmp_path, text=SMALL):
    p = tmp_path / "c.yaml"
    p.write_text(text)
    return str(p)


def test_cli_simulate_and_manifest(tmp_path):
    out = tmp_path / "out"
    assert main(["simulate", "--config", _cfg(tmp_path), "--out-dir", str(out)]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["seeds"] == [1, 2] and m["version"] == __version__
    assert m["config_hash"] == ExperimentConfig.from_yaml(SMALL).hash()
    for f in m["outputs"]:
        assert (out / f).exists()


def test_cli_simulate_reproducible(tmp_path):
    cfg = _cfg(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    main(["simulate", "--config", cfg, "--out-dir", str(a), "--seed", "3"])
    main(["simulate", "--config", cfg, "--out-dir", str(b), "--seed", "3", "--jobs", "2"])
    for f in json.loads((a / "manifest.json").read_text())["outputs"]:
        assert (a / f).read_bytes() == (b / f).read_bytes()


@pytest.mark.parametrize("cmd,extra", [
    ("stability", []),
    ("continuation", ["--steps", "21"]),
    ("gsweep", ["--points", "7"]),
    ("stats", ["--bootstrap", "20"]),
    ("validate", []),
])
def test_cli_subcommands_succeed(tmp_path, cmd, extra):
    out = tmp_path / cmd
    assert main([cmd, "--config", _cfg(tmp_path), "--out-dir", str(out), *extra]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["command"] == cmd
    for f in m["outputs"]:
        with open(out / f) as fh:
            assert next(csv.reader(fh))


def test_cli_baselines_small(tmp_path):
    out = tmp_path / "b"
    args = ["baselines", "--out-dir", str(out), "--events", "5000", "--horizon", "3000", "--rho-grid", "0.1,0.2"]
    assert main(args) == 0


def test_cli_strict_violation_exit_code(tmp_path):
    cfg = _cfg(tmp_path, "model: {lambda: 0.5}\n")
    assert main(["validate", "--config", cfg, "--strict-ranges", "--out-dir", str(tmp_path / "v")]) == 2


def test_cli_lenient_warns(tmp_path):
    cfg = _cfg(tmp_path, "model: {lambda: 0.5}\n")
    with pytest.warns(UserWarning):
        assert main(["stability", "--config", cfg, "--out-dir", str(tmp_path / "s")]) == 0


def test_cli_parse_error_exit_code(tmp_path):
    assert main(["validate", "--config", _cfg(tmp_path, "model: [\n"), "--out-dir", str(tmp_path)]) == 2


def test_cli_missing_file_exit_code(tmp_path):
    assert main(["validate", "--config", str(tmp_path / "nope.yaml"), "--out-dir", str(tmp_path)]) == 2
