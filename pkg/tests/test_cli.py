import json
import shutil
from pathlib import Path

import pytest

from displat import cli
from displat.cli import run
from displat.config import (CONFIG_SCHEMA, DEFAULTS, ConfigError, load_config, load_potential,
                            parse_config)
from displat.errors import ChainSingular, RouteMismatch

ROOT = Path(__file__).resolve().parents[1]
FIX = ROOT / "fixtures"


@pytest.fixture
def workdir(tmp_path):
    for f in FIX.glob("*.json"):
        shutil.copy(f, tmp_path)
    return tmp_path


def write_config(d, name, data):
    path = d / name
    path.write_text(json.dumps(data))
    return str(path)


def run_in(d, *argv):
    return run([*argv, "--out", str(d / "out")])


# -- config ----------------------------------------------------------------------------

def test_schema_file_is_current():
    on_disk = json.loads((ROOT / "docs" / "config_schema.json").read_text())
    assert on_disk == CONFIG_SCHEMA


def test_defaults_fill_missing_keys(workdir):
    cfg = load_config(workdir / "classify_v1.json", "classify")
    assert cfg.section("classify") == DEFAULTS["classify"]
    assert cfg.effective()["command"] == "classify"
    assert cfg.load_potential().n0 == -2


def test_config_errors(workdir):
    with pytest.raises(ConfigError):
        parse_config({"bogus": 1}, "classify")
    with pytest.raises(ConfigError):
        parse_config({"decay": {"samples": 1}}, "decay")
    with pytest.raises(ConfigError):
        parse_config({"command": "decay"}, "classify")
    with pytest.raises(ConfigError):
        parse_config({"potential": "missing.json"}, "classify", workdir)
    with pytest.raises(ConfigError):
        load_config(workdir / "nope.json", "classify")


def test_generator_potential(workdir):
    a = load_potential(workdir / "random_regular.json")
    b = load_potential(workdir / "random_regular.json")
    assert a == b and not a.is_zero
    (workdir / "g.json").write_text(json.dumps({"generator": "other"}))
    with pytest.raises(ConfigError):
        load_potential(workdir / "g.json")


# -- commands ---------------------------------------------------------------------------

def test_classify_report(workdir):
    assert run_in(workdir, "classify", "--config", str(workdir / "classify_v1.json")) == 0
    rep = json.loads((workdir / "out" / "classify_report.json").read_text())
    assert rep["report"]["zero_class"] == "second_kind"
    assert rep["config"]["classify"]["tol"] == 1e-8
    assert rep["potential"]["values"] == [-1.0, 4.0, -3.0, 4.0, -1.0]
    meta = json.loads((workdir / "out" / "classify_report.meta.json").read_text())
    assert meta["report"] == "classify_report.json" and "timestamp" in meta


def test_reports_are_deterministic(workdir):
    cfg = str(workdir / "classify_v3.json")
    outs = []
    for name in ("a", "b"):
        assert run(["classify", "--config", cfg, "--out", str(workdir / name)]) == 0
        outs.append((workdir / name / "classify_report.json").read_bytes())
    assert outs[0] == outs[1]


def test_free_decay_writes_csv(workdir):
    cfg = write_config(workdir, "d.json", {"decay": {"flow": "laplacian",
                                                     "fit_window": [100, 1000],
                                                     "samples": 9}})
    assert run_in(workdir, "decay", "--free", "--config", cfg) == 0
    lines = (workdir / "out" / "decay.csv").read_text().splitlines()
    assert lines[0] == "t,supnorm" and len(lines) == 10
    rep = json.loads((workdir / "out" / "decay_report.json").read_text())
    assert rep["flow"] == "laplacian"


def test_resolvent_check(workdir):
    cfg = write_config(workdir, "r.json", {"potential": "v1.json",
                                           "resolvent": {"samples": 3, "half_width": 10}})
    assert run_in(workdir, "resolvent-check", "--config", cfg) == 0
    rep = json.loads((workdir / "out" / "resolvent_check_report.json").read_text())
    assert all(rep["checks"].values())


# -- exit codes -------------------------------------------------------------------------

def test_exit_usage(workdir, capsys):
    assert run(["classify", "--config", str(workdir / "missing.json")]) == 64
    with pytest.raises(SystemExit) as exc:
        run(["frobnicate"])
    assert exc.value.code == 64
    with pytest.raises(SystemExit) as exc:
        run(["classify"])
    assert exc.value.code == 64


def test_exit_library_error(workdir):
    cfg = str(workdir / "resolvent_tiny_window.json")
    assert run_in(workdir, "resolvent-check", "--config", cfg) == 1


@pytest.mark.parametrize("exc, code", [(RouteMismatch("x", space="S1"), 2),
                                       (ChainSingular("x", stage="D0"), 3)])
def test_exit_classifier_failures(workdir, monkeypatch, exc, code):
    def boom(*args, **kwargs):
        raise exc
    monkeypatch.setattr(cli, "classify", boom)
    assert run_in(workdir, "classify", "--config", str(workdir / "classify_v1.json")) == code


def test_exit_wavefront(workdir):
    cfg = write_config(workdir, "w.json", {"potential": "v1.json",
                                           "decay": {"mode": "potential", "window": 512,
                                                     "fit_window": [50, 2000]}})
    assert run_in(workdir, "decay", "--config", cfg) == 4


def test_exit_residual(workdir):
    cfg = write_config(workdir, "r.json", {"resolvent": {"samples": 2, "half_width": 10,
                                                         "free_tol": 1e-300}})
    assert run_in(workdir, "resolvent-check", "--config", cfg) == 5
    rep = json.loads((workdir / "out" / "resolvent_check_report.json").read_text())
    assert rep["checks"]["free_residual"] is False


def test_exit_order(workdir):
    cfg = write_config(workdir, "e.json", {"expansion": {
        "cases": [{"threshold": 16, "N": 1, "order_tol": 1e-6}]}})
    assert run_in(workdir, "expansion-check", "--config", cfg) == 6
