import json
import subprocess
import sys

import numpy as np
import pytest

from mvpb.cli import main, read_fields
from mvpb.collision import CollisionSystem
from mvpb.tables import parse

SMALL = {"n_max": 6, "l_max": 3}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def run(tmp_path, command, cfg, *extra):
    out = tmp_path / command
    code = main([command, "--config", write(tmp_path, cfg), "--out", str(out), *extra])
    return code, out


def test_assemble_writes_artifact_and_summary(tmp_path):
    code, out = run(tmp_path, "assemble", {"collision": SMALL | {"format": "json"}})
    assert code == 0
    cs = CollisionSystem.load(out / "collision.json")
    assert cs.n_max == 6 and cs.null_count == 5
    s = json.loads((out / "collision_summary.json").read_text())
    assert s["metadata"]["command"] == "assemble" and "config_hash" in s["metadata"]


def test_artifact_reused_by_later_commands(tmp_path):
    _, out = run(tmp_path, "assemble", {"collision": SMALL})
    cfg = {"collision": {"artifact": str(out / "collision.npz")}, "spectrum": {"eta": [0.5], "eps": [0.1, 0.05, 0.025, 0.0125]}}
    code, sp = run(tmp_path, "spectrum", cfg)
    assert code == 0
    t = parse(sp / "spectrum.csv")
    assert len(t.rows) == 5 * 4
    assert t.metadata["basis"]["n_max"] == 6
    assert max(t.column("residual")) < 1e-8


def test_propagate(tmp_path):
    cfg = {"collision": SMALL, "propagate": {"eta": [0.1, 1.0, 40.0], "t": [0.0, 1.0]}}
    code, out = run(tmp_path, "propagate", cfg)
    assert code == 0
    t = parse(next(out.glob("*.csv")))
    assert "r0" in t.metadata
    assert len(t.rows) > 0


def test_nspf_and_field_dump(tmp_path):
    cfg = {"nspf": {"grid": 16, "dim": 2, "L": 1.0, "steps": 5, "dt": 0.01, "amplitude": 0.2, "initial_data": "random_solenoidal", "dump": True}, "transport": {"kappa0": 0.18, "kappa1": 0.45}}
    code, out = run(tmp_path, "nspf", cfg, "--seed", "9")
    assert code == 0
    t = parse(out / "nspf.csv")
    assert t.columns == ["t", "energy", "divergence", "boussinesq", "dt"]
    assert len(t.rows) == 6 and max(t.column("divergence")) < 1e-9
    header, m, q = read_fields(out / "nspf_fields.bin")
    assert header["dtype"] == "complex64" and m.shape == (2, 16, 9) and q.shape == (16, 9)
    assert header["t"] == pytest.approx(0.05)
    assert np.abs(q).max() > 0


def test_oscillation(tmp_path):
    cfg = {"oscillation": {"theta": [10.0, 20.0, 40.0, 80.0], "n_x": 200}}
    code, out = run(tmp_path, "oscillation", cfg)
    assert code == 0
    t = parse(out / "oscillation.csv")
    assert len(t.rows) == 4 and "slope" in t.metadata


def test_fit_from_file_and_inline(tmp_path):
    (tmp_path / "pts.csv").write_text("x,y\n0.1,0.02\n0.05,0.005\n0.025,0.00125\n0.0125,0.0003125\n")
    code, out = run(tmp_path, "fit", {"fit": {"input": "pts.csv"}})
    assert code == 0
    res = json.loads((out / "fit.json").read_text())
    assert res["fit"]["exponent"] == pytest.approx(2.0, abs=1e-12)
    code, out = run(tmp_path, "fit", {"fit": {"x": [1, 2, 4, 8], "y": [1, 0.5, 0.25, 0.125]}})
    assert json.loads((out / "fit.json").read_text())["fit"]["exponent"] == pytest.approx(-1.0)


def test_limit_deterministic(tmp_path):
    cfg = {"collision": SMALL, "limit": {"eta_max": 3.0, "eps_list": [0.1, 0.05], "norms": ["majorant"], "error_estimate": False}}
    texts = []
    for i in range(2):
        code = main(["limit", "--config", write(tmp_path, cfg), "--out", str(tmp_path / f"r{i}"), "--seed", "42"])
        assert code == 0
        texts.append((tmp_path / f"r{i}" / "limit.csv").read_bytes())
    assert texts[0] == texts[1]
    meta = json.loads((tmp_path / "r0" / "limit_fits.json").read_text())["metadata"]
    assert meta["seed"] == 42 and meta["command"] == "limit"


@pytest.mark.parametrize(
    "command, cfg",
    [
        ("assemble", {"collision": {"n_max": 2, "l_max": 6}}),
        ("assemble", {"collision": SMALL | {"format": "hdf5"}}),
        ("limit", {"collision": SMALL, "limit": {"bogus": 1}}),
        ("limit", {"collision": SMALL, "limit": {"eps_list": [0.05, 0.1]}}),
        ("nspf", {"nspf": {"initial_data": "vortex", "grid": 8}, "transport": {"kappa0": 0.1, "kappa1": 0.1}}),
        ("fit", {"fit": {}}),
        ("spectrum", {"collision": {"artifact": "missing.npz"}}),
    ],
)
def test_precondition_exit_code(tmp_path, capsys, command, cfg):
    code, _ = run(tmp_path, command, cfg)
    assert code == 2
    assert capsys.readouterr().err.startswith(f"mvpb {command}:")


def test_convergence_exit_code(tmp_path):
    cfg = {"nspf": {"grid": 8, "dim": 2, "L": 1.0, "steps": 1, "dt": 0.1, "amplitude": 1e9}, "transport": {"kappa0": 0.1, "kappa1": 0.1}}
    assert run(tmp_path, "nspf", cfg)[0] == 3


def test_bad_flags(tmp_path):
    assert main(["fit", "--seed", "-1", "--out", str(tmp_path)]) == 2
    assert main(["fit", "--threads", "0", "--out", str(tmp_path)]) == 2
    assert main(["fit", "--config", str(tmp_path / "none.toml"), "--out", str(tmp_path)]) == 2


def test_toml_and_yaml_configs(tmp_path):
    (tmp_path / "a.toml").write_text("[fit]\nx = [1.0, 2.0, 4.0, 8.0]\ny = [1.0, 0.25, 0.0625, 0.015625]\n")
    (tmp_path / "b.yaml").write_text("fit:\n  x: [1, 2, 4, 8]\n  y: [1, 0.25, 0.0625, 0.015625]\n")
    for name in ("a.toml", "b.yaml"):
        out = tmp_path / name.split(".")[0]
        assert main(["fit", "--config", str(tmp_path / name), "--out", str(out)]) == 0
        assert json.loads((out / "fit.json").read_text())["fit"]["exponent"] == pytest.approx(-2.0)


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, {"fit": {"x": [1, 2, 4, 8], "y": [1, 2, 4, 8]}})
    r = subprocess.run([sys.executable, "-m", "mvpb.cli", "fit", "--config", cfg, "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0
    assert r.stdout.strip().endswith("fit.json")
