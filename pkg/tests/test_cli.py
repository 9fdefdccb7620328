import json

import numpy as np
import pytest

from macrocoh.cli import main
from macrocoh.config import load_preset
from macrocoh.io import RunManifest, read_binary_grid, run_identifier, write_binary_grid


@pytest.fixture
def small_config(tmp_path):
    d = load_preset("fig10").model_dump(mode="json")
    d["medium"]["length_um"] = 2e-4
    d["grid"].update(n_t=2001, z_stride=50)
    d["transverse"].update(n_samples=3)
    d["scan"] = {"densities_per_um3": [1e6, 2e6, 4e6]}
    d["thresholds"] = {"masses_ev": [0.001, 0.0087, 0.0502]}
    path = tmp_path / "small.json"
    path.write_text(json.dumps(d))
    return path


def _run(*argv):
    return main([str(a) for a in argv])


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_run_identifier_is_deterministic():
    a = run_identifier({"x": 1, "y": [1, 2]}, {"name": "bloch"})
    assert a == run_identifier({"y": [1, 2], "x": 1}, {"name": "bloch"})
    assert a != run_identifier({"x": 2, "y": [1, 2]}, {"name": "bloch"})
    assert len(a) == 16


def test_binary_round_trip(tmp_path):
    m = RunManifest("abc123", {"name": "propagate"}, {}, tmp_path)
    rng = np.random.default_rng(0)
    arr = rng.normal(size=(3, 5)) + 1j * rng.normal(size=(3, 5))
    paths = write_binary_grid(tmp_path / "fields", m, np.arange(3.0), np.arange(5.0), {"rho13": arr})
    assert paths[0].name == "fields_rho13.abc123.bin"
    assert np.array_equal(read_binary_grid(paths[0], 3, 5), arr)
    hdr = (tmp_path / "fields.hdr").read_text()
    assert "run_id: abc123" in hdr and "n_z: 3" in hdr


@pytest.mark.parametrize("command", ["propagate", "trigger", "transverse", "scan", "thresholds"])
def test_commands_write_manifest(command, small_config, tmp_path):
    out = tmp_path / command
    assert _run(command, "--config", small_config, "--out", out, "--jobs", 1) == 0
    man = _manifest(out)
    assert man["command"]["name"] == command
    assert (out / "config.json").exists()
    for entry in man["outputs"]:
        f = out / entry["file"]
        assert f.exists()
        if f.suffix == ".txt":
            assert f.read_text().startswith(f"# run_id: {man['run_id']}")


def test_rerun_from_snapshot_is_bitwise(small_config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run("propagate", "--config", small_config, "--out", a, "--format", "binary") == 0
    assert _run("propagate", "--config", a / "config.json", "--out", b, "--format", "binary") == 0
    ma, mb = _manifest(a), _manifest(b)
    assert ma["run_id"] == mb["run_id"]
    for entry in ma["outputs"]:
        assert (a / entry["file"]).read_bytes() == (b / entry["file"]).read_bytes()
    ma.pop("duration_s"), mb.pop("duration_s")
    assert ma == mb


def test_zero_field_bloch_is_constant(tmp_path):
    d = load_preset("fig2").model_dump(mode="json")
    d["pulses"]["pump"]["omega0_per_ns"] = 0.0
    d["pulses"]["stokes"]["omega0_per_ns"] = 0.0
    d["grid"]["n_t"] = 2001
    cfg = tmp_path / "zero.json"
    cfg.write_text(json.dumps(d))
    assert _run("bloch", "--config", cfg, "--out", tmp_path / "o") == 0
    data = np.loadtxt(tmp_path / "o" / "trajectory.txt")
    assert np.all(np.abs(data[:, 1] - 1) < 1e-12)
    assert np.all(data[:, 4:] == 0)


def test_exit_code_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"level_scheme": {}}')
    assert _run("bloch", "--config", bad, "--out", tmp_path / "o") == 2
    assert "required key missing" in capsys.readouterr().err


def test_exit_code_unknown_preset(capsys):
    assert _run("bloch", "--preset", "nope") == 2
    assert "available presets" in capsys.readouterr().err


def test_exit_code_numerical(tmp_path):
    d = load_preset("fig2").model_dump(mode="json")
    d["grid"]["n_t"] = 201
    cfg = tmp_path / "coarse.json"
    cfg.write_text(json.dumps(d))
    assert _run("bloch", "--config", cfg, "--out", tmp_path / "o") == 3


def test_exit_code_io(small_config, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert _run("thresholds", "--config", small_config, "--out", blocker) == 4


def test_presets_command(capsys):
    assert _run("presets") == 0
    assert "fig4" in capsys.readouterr().out.split()
