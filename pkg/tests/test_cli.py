import json

import numpy as np
import pytest

from veloreg.cli import main
from veloreg.volio import read_vector, read_volume, write_volume


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(out), "--size", "16", "--labels", "--seed", "2"]) == 0
    return out


def test_synth_is_bit_identical(synth_dir, tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--size", "16", "--labels", "--seed", "2"]) == 0
    for name in ("reference", "template", "velocity_true_1", "labels_template"):
        assert (tmp_path / f"{name}.raw").read_bytes() == (synth_dir / f"{name}.raw").read_bytes()


def test_sinsq_case(tmp_path):
    from veloreg import make_grid
    from veloreg.synth import sinsq
    assert main(["synth", "--out", str(tmp_path), "--size", "16", "--case", "sinsq"]) == 0
    assert np.array_equal(read_volume(tmp_path / "reference"), sinsq(make_grid((16, 16, 16))))


def test_register_converges(synth_dir, tmp_path, capsys):
    code = main(["register", "--ref", str(synth_dir / "reference"), "--tpl",
                 str(synth_dir / "template"), "--beta", "5e-4", "--gamma", "1e-4", "--nt", "4",
                 "--interp", "bspline", "--deriv", "fd8", "--out", str(tmp_path), "--quiet"])
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["grad_rel"] <= 5e-2
    assert read_vector(tmp_path / "velocity").shape == (3, 16, 16, 16)
    assert read_volume(tmp_path / "warped").shape == (16, 16, 16)


def test_register_identical_images(synth_dir, tmp_path):
    ref = str(synth_dir / "reference")
    assert main(["register", "--ref", ref, "--tpl", ref, "--out", str(tmp_path), "--quiet"]) == 0
    assert not read_vector(tmp_path / "velocity").any()
    assert json.loads((tmp_path / "report.json").read_text())["iterations"] == 0


def test_register_cap_exit_code(synth_dir, tmp_path):
    code = main(["register", "--ref", str(synth_dir / "reference"), "--tpl",
                 str(synth_dir / "template"), "--out", str(tmp_path), "--max-newton", "1",
                 "--no-continuation", "--quiet"])
    assert code == 2


def test_register_grid_mismatch(synth_dir, tmp_path, capsys):
    write_volume(np.zeros((32, 32, 32), np.float32), tmp_path / "big")
    code = main(["register", "--ref", str(synth_dir / "reference"), "--tpl",
                 str(tmp_path / "big"), "--out", str(tmp_path)])
    assert code == 1
    assert "grid mismatch" in capsys.readouterr().err


def test_warp_roundtrip(synth_dir, tmp_path):
    common = ["--velocity", str(synth_dir / "velocity_true")]
    assert main(["warp", "--image", str(synth_dir / "reference"), *common,
                 "--out", str(tmp_path / "fwd")]) == 0
    assert main(["warp", "--image", str(tmp_path / "fwd"), *common, "--direction", "backward",
                 "--out", str(tmp_path / "back")]) == 0
    ref = read_volume(synth_dir / "reference")
    back = read_volume(tmp_path / "back")
    assert np.linalg.norm(back - ref) / np.linalg.norm(ref) <= 5e-2
    assert json.loads((tmp_path / "back.report.json").read_text())["direction"] == "backward"


def test_warp_labels(synth_dir, tmp_path):
    assert main(["warp", "--image", str(synth_dir / "labels_reference"), "--velocity",
                 str(synth_dir / "velocity_true"), "--labels", "--out", str(tmp_path / "lab")]) == 0
    out = read_volume(tmp_path / "lab")
    assert out.dtype == np.uint16
    assert set(np.unique(out)) <= set(np.unique(read_volume(synth_dir / "labels_reference")))


def test_metrics_dice(synth_dir, capsys):
    lab = str(synth_dir / "labels_reference")
    assert main(["metrics", "dice", "--a", lab, "--b", lab]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == 1.0


def test_bench_deriv_sweep(tmp_path, capsys):
    assert main(["bench", "deriv", "--backend", "fd8", "--size", "32",
                 "--csv", str(tmp_path / "d.csv"), "--json", str(tmp_path / "d.json")]) == 0
    rows = json.loads((tmp_path / "d.json").read_text())["rows"]
    assert [r["omega"] for r in rows] == list(range(1, 17))


def test_bench_interp_row(capsys):
    assert main(["bench", "interp", "--size", "32", "--variant", "bspline", "--reps", "1"]) == 0
    row = json.loads(capsys.readouterr().out)["rows"][0]
    assert row["variant"] == "bspline" and row["N"] == 32


def test_threads_env_fallback(monkeypatch, synth_dir):
    from veloreg.cli import build_parser
    monkeypatch.setenv("VELOREG_THREADS", "1")
    assert build_parser().parse_args(["metrics", "dice"]).threads == 1


def test_unreadable_input(tmp_path, capsys):
    assert main(["metrics", "dice", "--a", str(tmp_path / "x"), "--b", str(tmp_path / "y")]) == 1
