import json
import subprocess
import sys

import numpy as np
import pytest

from wsaug.cli import run_cli
from wsaug.io import read_pgm, write_pgm, write_sdf_csv
from wsaug.wscore import NetworkSpec, init_relu, load, save


def run(capsys, *argv):
    code = run_cli([str(a) for a in argv])
    out = capsys.readouterr()
    return code, [json.loads(line) for line in out.out.splitlines() if line.strip()], out.err


@pytest.fixture(scope="module")
def fitted(tmp_path_factory):
    d = tmp_path_factory.mktemp("fits")
    for seed in (1, 2):
        assert run_cli(["fit", "--signal", "radial_gradient", "--signal-seed", "5", "--seed", str(seed),
                        "--out", str(d / f"v{seed}.wse")]) == 0
    return d


def test_no_args_and_help(capsys):
    assert run_cli([]) == 1
    assert run_cli(["--help"]) == 0
    assert "gen-dataset" in capsys.readouterr().out
    for cmd in ("fit", "verify", "mixup", "barrier", "render", "align", "augment", "gen-dataset"):
        assert run_cli([cmd, "--help"]) == 0
        assert "--" in capsys.readouterr().out


def test_usage_errors(capsys, tmp_path):
    assert run_cli(["fit", "--signal", "disk"]) == 1  # missing --out
    assert run_cli(["fit", "--signal", "disk", "--out", "x", "--bogus"]) == 1
    assert run_cli(["frobnicate"]) == 1
    assert run_cli(["render", "--in", str(tmp_path / "missing.wse"), "--out", str(tmp_path / "o.pgm")]) == 1
    (tmp_path / "bad.wse").write_text("{")
    assert run_cli(["verify", "--kind", "permute", "--in", str(tmp_path / "bad.wse")]) == 1
    assert "offset" in capsys.readouterr().err


def test_fit_outputs_report(fitted, capsys, tmp_path):
    code, out, _ = run(capsys, "fit", "--signal", "checkerboard", "--out", tmp_path / "c.wse")
    assert code == 0
    assert out[0]["final_psnr"] >= 40 and out[0]["stopped_early"]
    assert load(tmp_path / "c.wse").spec.dims == (2, 32, 32, 1)
    assert load(fitted / "v1.wse") != load(fitted / "v2.wse")


def test_fit_from_files(capsys, tmp_path):
    img = (np.add.outer(np.arange(16), np.arange(16)) * 8).astype(np.uint8)
    write_pgm(tmp_path / "g.pgm", img)
    code, out, _ = run(capsys, "fit", "--image", tmp_path / "g.pgm", "--steps", "50", "--out", tmp_path / "g.wse")
    assert code == 0 and out[0]["steps_used"] <= 50
    pts = np.random.default_rng(0).uniform(-1, 1, (64, 3))
    write_sdf_csv(tmp_path / "s.csv", pts, np.linalg.norm(pts, axis=1) - 0.5)
    code, out, _ = run(capsys, "fit", "--sdf", tmp_path / "s.csv", "--steps", "20", "--out", tmp_path / "s.wse")
    assert code == 0 and out[0]["final_psnr"] is None
    assert load(tmp_path / "s.wse").spec.dims == (3, 32, 32, 32, 32, 1)


def test_fit_divergence_exit_code(capsys, tmp_path):
    code, _, err = run(capsys, "fit", "--signal", "disk", "--lr", "1e30", "--steps", "20",
                       "--activation", "relu", "--out", tmp_path / "d.wse")
    assert code == 2 and "numeric" in err
    assert not (tmp_path / "d.wse").exists()


def test_verify(fitted, capsys):
    code, out, _ = run(capsys, "verify", "--kind", "siren_negation", "--in", fitted / "v1.wse",
                       "--points", "1024", "--tol", "1e-4")
    assert code == 0 and out[0]["passed"] and out[0]["points"] == 1024
    code, out, _ = run(capsys, "verify", "--kind", "permute", "--kind", "rotate_input", "--in",
                       fitted / "v1.wse", fitted / "v2.wse")
    assert code == 0 and len(out) == 4
    code, out, _ = run(capsys, "verify", "--kind", "scale_input", "--in", fitted / "v1.wse", "--tol", "1e-14")
    assert code == 2 and not out[0]["passed"]
    code, _, _ = run(capsys, "verify", "--kind", "dropout", "--in", fitted / "v1.wse")
    assert code == 1


def test_augment(fitted, capsys, tmp_path):
    pipe = tmp_path / "p.json"
    pipe.write_text(json.dumps([{"kind": "permute", "p": 1.0}, {"kind": "siren_bias", "p": 1.0}]))
    args = ["augment", "--in", fitted / "v1.wse", "--pipeline", pipe, "--seed", "4"]
    assert run(capsys, *args, "--out", tmp_path / "a.wse")[0] == 0
    assert run(capsys, *args, "--out", tmp_path / "b.wse")[0] == 0
    assert (tmp_path / "a.wse").read_bytes() == (tmp_path / "b.wse").read_bytes()
    assert load(tmp_path / "a.wse") != load(fitted / "v1.wse")
    pipe.write_text(json.dumps([{"kind": "relu_scaling", "p": 1.0}]))
    assert run(capsys, *args, "--out", tmp_path / "c.wse")[0] == 1


def test_align(fitted, capsys, tmp_path):
    code, out, _ = run(capsys, "align", "--a", fitted / "v1.wse", "--b", fitted / "v2.wse",
                       "--out", tmp_path / "al.json")
    assert code == 0
    res = out[0]
    assert res["objective"] < res["identity_objective"] and res["converged"]
    assert [len(p) for p in res["perms"]] == [32, 32]
    assert json.loads((tmp_path / "al.json").read_text()) == res


def test_mixup(fitted, capsys, tmp_path):
    code, out, _ = run(capsys, "mixup", "--mode", "aligned", "--a", fitted / "v1.wse", "--b", fitted / "v2.wse",
                       "--lambda", "0.5", "--out", tmp_path / "m.wse", "--label-a", "0", "--label-b", "2",
                       "--num-classes", "3", "--labels-out", tmp_path / "y.json")
    assert code == 0
    assert load(tmp_path / "m.wse").spec == NetworkSpec.mlp([2, 32, 32, 1])
    assert out[0]["label"] == [0.5, 0.0, 0.5]
    assert json.loads((tmp_path / "y.json").read_text())["lambda"] == 0.5
    code, out, _ = run(capsys, "mixup", "--mode", "naive", "--a", fitted / "v1.wse", "--b", fitted / "v2.wse",
                       "--lambda", "1", "--out", tmp_path / "n.wse")
    assert code == 0 and load(tmp_path / "n.wse") == load(fitted / "v1.wse")
    assert run(capsys, "mixup", "--a", fitted / "v1.wse", "--b", fitted / "v2.wse", "--lambda", "2",
               "--out", tmp_path / "z.wse")[0] == 1
    assert run(capsys, "mixup", "--a", fitted / "v1.wse", "--b", fitted / "v2.wse", "--label-a", "1",
               "--out", tmp_path / "z.wse")[0] == 1


def test_mixup_seed_reproducible(fitted, capsys, tmp_path):
    for name in ("r1", "r2"):
        assert run(capsys, "mixup", "--mode", "randperm", "--a", fitted / "v1.wse", "--b", fitted / "v2.wse",
                   "--seed", "8", "--out", tmp_path / f"{name}.wse")[0] == 0
    assert (tmp_path / "r1.wse").read_bytes() == (tmp_path / "r2.wse").read_bytes()


def test_barrier(fitted, capsys, tmp_path):
    code, out, _ = run(capsys, "barrier", "--a", fitted / "v1.wse", "--b", fitted / "v2.wse",
                       "--signal", "radial_gradient", "--signal-seed", "5", "--grid", "6", "--out", tmp_path / "b.csv")
    assert code == 0 and out[0]["align"] == "matched"
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "lambda,loss" and len(lines) == 7
    lam, loss = np.loadtxt(tmp_path / "b.csv", delimiter=",", skiprows=1).T
    chord = loss[0] + lam * (loss[-1] - loss[0])
    assert out[0]["barrier"] == pytest.approx(np.max(loss - chord), abs=1e-12)


def test_render(fitted, capsys, tmp_path):
    assert run(capsys, "render", "--in", fitted / "v1.wse", "--out", tmp_path / "r.pgm", "--height", "20",
               "--width", "24")[0] == 0
    assert (tmp_path / "r.pgm").read_bytes().startswith(b"P5")
    assert read_pgm(tmp_path / "r.pgm").shape == (20, 24)
    save(init_relu(NetworkSpec.mlp([3, 4, 1], hidden="relu"), 0), tmp_path / "sdf.wse")
    assert run(capsys, "render", "--in", tmp_path / "sdf.wse", "--out", tmp_path / "x.pgm")[0] == 1


def test_gen_dataset_cli(capsys, tmp_path):
    code, out, _ = run(capsys, "gen-dataset", "--out-dir", tmp_path, "--classes", "disk", "--per-class", "2",
                       "--views", "1", "--workers", "1")
    assert code == 0 and out[-1] == {"manifest": str(tmp_path / "manifest.json"), "entries": 2, "failures": 0}
    code, out, _ = run(capsys, "gen-dataset", "--out-dir", tmp_path / "bad", "--classes", "teapot",
                       "--per-class", "1", "--views", "1", "--workers", "1")
    assert code in (1, 2)


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "wsaug.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "render" in res.stdout
