import json

import numpy as np
import pytest

from loopbif import checks
from loopbif.cli import BRANCH_COLUMNS, emit_branch, fmt, main, run
from loopbif.config import bundled_config, config_from_dict, load_config
from loopbif.continuation import Branch
from loopbif.mesh import ConfigError, Frame
from loopbif.system import SolutionPoint

from conftest import MAIN_WEIGHTS


def _cfg_file(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_bundled_configs_load():
    assert bundled_config("main_case").grid.n == 513
    assert bundled_config("prehypo").params.frame == "P_eps_variant"


def test_misspelled_key_is_named(tmp_path, capsys):
    path = _cfg_file(tmp_path, {"weights": MAIN_WEIGHTS, "continuation": {"rhoo": 3.0}})
    with pytest.raises(ConfigError, match="rhoo"):
        load_config(path)
    assert run("eigen", path, str(tmp_path / "out")) == 2
    assert "rhoo" in capsys.readouterr().err


@pytest.mark.parametrize("bad", [
    {"weights": MAIN_WEIGHTS, "params": {"p": 1.5, "q": 1.2}},
    {"weights": MAIN_WEIGHTS, "grid": {"n": 2}},
    {"weights": MAIN_WEIGHTS, "continuation": {"eps_sequence": [0.01, 0.1]}},
    {"weights": MAIN_WEIGHTS, "continuation": {"eps_sequence": []}},
    {"weights": {"a": {"kind": "constant", "value": 1.0, "colour": 2}, "b": MAIN_WEIGHTS["b"]}},
    {"weights": {"a": MAIN_WEIGHTS["a"]}},
    {"grid": {"n": 65}},
])
def test_invalid_configs_rejected(bad):
    with pytest.raises(ConfigError):
        config_from_dict(bad)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.json")
    (tmp_path / "broken.json").write_text("{")
    assert run("eigen", str(tmp_path / "broken.json"), str(tmp_path)) == 2


def test_cstar_table(tmp_path):
    assert run("cstar", "main_case", str(tmp_path)) == 0
    raw = (tmp_path / "cstar.csv").read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    lines = raw.decode().splitlines()
    assert lines[0] == "eps,cstar_eps,residual"
    cs = [float(line.split(",")[1]) for line in lines[1:]]
    assert np.all(np.diff(cs) > 0)
    assert cs[-1] == pytest.approx(0.5 ** (2 / 3), rel=1e-15)
    assert abs(cs[-2] - cs[-1]) < abs(cs[0] - cs[-1])


def test_sigma_on_main_case_is_config_error(tmp_path, capsys):
    assert run("sigma", "main_case", str(tmp_path)) == 2
    assert "prehypo" in capsys.readouterr().err


def test_numerical_failure_status(tmp_path):
    cfg = {"weights": {"a": {"kind": "constant", "value": 1.0},
                       "b": {"kind": "cosine_shift", "amplitude": 1.0, "offset": 0.5}}}
    assert run("eigen", _cfg_file(tmp_path, cfg), str(tmp_path / "o")) == 3


def test_eps_override_validated(tmp_path):
    assert run("trace", "main_case", str(tmp_path), eps=2.0) == 2


def test_trace_outputs_are_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert run("trace", "main_case", str(tmp_path / d), eps=0.1) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "branch_eps0.1.csv" in files and "branch_eps0.1.plot.csv" in files and "branch_eps0.1.meta.txt" in files
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / "branch_eps0.1.csv").read_text().splitlines()[0]
    assert header == ",".join(BRANCH_COLUMNS)


def test_verify_deterministic(tmp_path):
    assert main(["verify", "--out", str(tmp_path / "a"), "--quiet"]) == 0
    assert main(["verify", "--out", str(tmp_path / "b"), "--quiet", "--seed", "42"]) == 0
    a, b = (tmp_path / d / "verify.csv" for d in "ab")
    assert a.read_bytes() == b.read_bytes()
    assert "FAIL" not in a.read_text()


def test_verify_failure_exit_status(tmp_path, monkeypatch):
    monkeypatch.setattr(checks, "run_checks", lambda cfg, seed=None: [checks.CheckResult("x", False, 1.0, 0.0)])
    assert run("verify", "main_case", str(tmp_path)) == 1


def test_emit_empty_and_k_point_branches(tmp_path):
    empty = Branch([], 0.1, "user_seed", Frame.Q)
    emit_branch(empty, tmp_path, "empty")
    assert (tmp_path / "empty.csv").read_text() == ",".join(BRANCH_COLUMNS) + "\n"
    pts = [SolutionPoint(float(i), np.full(4, i + 0.5), 0.0, i + 0.5, Frame.Q) for i in range(7)]
    emit_branch(Branch(pts, 0.1, "user_seed", Frame.Q), tmp_path, "seven")
    assert len((tmp_path / "seven.csv").read_text().splitlines()) == 8
    assert len((tmp_path / "seven.plot.csv").read_text().splitlines()) == 8


def test_float_rendering_round_trips(rng):
    for x in rng.standard_normal(100) * 10.0 ** rng.integers(-300, 300, 100):
        assert float(fmt(x)) == x
    assert fmt(True) == "true" and fmt(3) == "3" and fmt(Frame.P_EPS) == "P_eps_variant"
