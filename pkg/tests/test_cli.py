import hashlib
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from hvgan.model import init_networks, load_checkpoint
from hvgan.synth import write_corpus


def run_cli(*args):
    """Invoke the installed CLI in a subprocess on the numpy kernel backend
    (keeps startup light; backend selection itself is covered elsewhere)."""
    env = dict(os.environ, HVGAN_KERNELS="numpy")
    return subprocess.run(
        [sys.executable, "-m", "hvgan", *args],
        capture_output=True, text=True, env=env,
    )


def _write_pgm(path, arr):
    arr = np.asarray(arr, dtype=np.uint8)
    h, w = arr.shape
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode() + arr.tobytes())


class TestHv:
    def test_two_point_front(self, tmp_path):
        pts = tmp_path / "p.csv"
        pts.write_text("1,2\n2,1\n")
        proc = run_cli("hv", str(pts), "--ref", "3,3")
        assert proc.returncode == 0, proc.stderr
        assert proc.stdout == "3.00000000000\n"

    def test_empty_file_prints_zero(self, tmp_path):
        pts = tmp_path / "e.csv"
        pts.write_text("")
        proc = run_cli("hv", str(pts), "--ref", "3,3")
        assert proc.returncode == 0
        assert proc.stdout == "0\n"

    def test_reference_violation_names_the_point(self, tmp_path):
        pts = tmp_path / "v.csv"
        pts.write_text("1,2\n5,1\n")
        proc = run_cli("hv", str(pts), "--ref", "3,3")
        assert proc.returncode == 1
        assert "point 1" in proc.stderr

    def test_max_orientation(self, tmp_path):
        pts = tmp_path / "m.csv"
        pts.write_text("2,1\n1,2\n")
        proc = run_cli("hv", str(pts), "--orient", "max", "--ref", "0,0")
        assert proc.returncode == 0
        assert proc.stdout == "3.00000000000\n"

    def test_mc_adds_estimate_line(self, tmp_path):
        pts = tmp_path / "p.csv"
        pts.write_text("1,2\n2,1\n")
        proc = run_cli("hv", str(pts), "--ref", "3,3", "--mc", "20000", "--seed", "7")
        assert proc.returncode == 0
        lines = proc.stdout.splitlines()
        assert len(lines) == 2
        est, stderr = (float(v) for v in lines[1].split())
        assert abs(est - 3.0) <= 4.0 * stderr

    def test_mc_is_seed_deterministic(self, tmp_path):
        pts = tmp_path / "p.csv"
        pts.write_text("1,2\n2,1\n")
        a = run_cli("hv", str(pts), "--ref", "3,3", "--mc", "5000", "--seed", "3")
        b = run_cli("hv", str(pts), "--ref", "3,3", "--mc", "5000", "--seed", "3")
        assert a.stdout == b.stdout


class TestPareto:
    def test_three_point_example(self, tmp_path):
        pts = tmp_path / "p.csv"
        pts.write_text("1,2\n2,1\n2,2\n")
        proc = run_cli("pareto", str(pts))
        assert proc.returncode == 0
        assert proc.stdout == "1,2\n2,1\n"

    def test_singleton_echoed(self, tmp_path):
        pts = tmp_path / "s.csv"
        pts.write_text("5\n")
        proc = run_cli("pareto", str(pts))
        assert proc.stdout == "5\n"

    def test_fractional_values_survive(self, tmp_path):
        pts = tmp_path / "f.csv"
        pts.write_text("1.5,2\n")
        proc = run_cli("pareto", str(pts))
        assert proc.stdout == "1.5,2\n"

    def test_ragged_input_fails_with_line_number(self, tmp_path):
        pts = tmp_path / "r.csv"
        pts.write_text("1,2\n3\n")
        proc = run_cli("pareto", str(pts))
        assert proc.returncode == 1
        assert "line 2" in proc.stderr


class TestEval:
    def test_identical_images(self, tmp_path):
        img = np.random.default_rng(130).integers(0, 256, size=(16, 16))
        _write_pgm(tmp_path / "a.pgm", img)
        proc = run_cli("eval", "--ref", str(tmp_path / "a.pgm"),
                       "--test", str(tmp_path / "a.pgm"))
        assert proc.returncode == 0
        assert proc.stdout == "inf,1.000000,0.000000\n"

    def test_half_offset_psnr(self, tmp_path):
        # a balanced mix of +127 and +128 byte offsets lands the MSE within
        # 2e-5 of the exact 0.25, i.e. within 1e-4 dB of 10*log10(4)
        base = np.zeros((16, 16), dtype=np.uint8)
        offs = np.indices((16, 16)).sum(axis=0) % 2
        test = (127 + offs).astype(np.uint8)
        _write_pgm(tmp_path / "a.pgm", base)
        _write_pgm(tmp_path / "b.pgm", test)
        proc = run_cli("eval", "--ref", str(tmp_path / "a.pgm"),
                       "--test", str(tmp_path / "b.pgm"))
        assert proc.returncode == 0
        psnr_field = float(proc.stdout.split(",")[0])
        assert psnr_field == pytest.approx(6.0206, abs=1e-3)

    def test_swapped_arguments_agree(self, tmp_path):
        rng = np.random.default_rng(131)
        _write_pgm(tmp_path / "a.pgm", rng.integers(0, 256, size=(16, 16)))
        _write_pgm(tmp_path / "b.pgm", rng.integers(0, 256, size=(16, 16)))
        fwd = run_cli("eval", "--ref", str(tmp_path / "a.pgm"),
                      "--test", str(tmp_path / "b.pgm"))
        rev = run_cli("eval", "--ref", str(tmp_path / "b.pgm"),
                      "--test", str(tmp_path / "a.pgm"))
        assert fwd.stdout.split(",")[1:] == rev.stdout.split(",")[1:]

    def test_shape_mismatch(self, tmp_path):
        _write_pgm(tmp_path / "a.pgm", np.zeros((16, 16), dtype=np.uint8))
        _write_pgm(tmp_path / "b.pgm", np.zeros((16, 12), dtype=np.uint8))
        proc = run_cli("eval", "--ref", str(tmp_path / "a.pgm"),
                       "--test", str(tmp_path / "b.pgm"))
        assert proc.returncode == 1
        assert "shape mismatch" in proc.stderr

    def test_missing_file_is_io_error(self, tmp_path):
        _write_pgm(tmp_path / "a.pgm", np.zeros((16, 16), dtype=np.uint8))
        proc = run_cli("eval", "--ref", str(tmp_path / "a.pgm"),
                       "--test", str(tmp_path / "nope.pgm"))
        assert proc.returncode == 2


def _train_config(tmp_path, sub="run", **over):
    corpus = tmp_path / "corpus"
    if not corpus.exists():
        write_corpus(corpus, seed=0, count=2, size=24)
    cfg = dict(
        dataset=str(corpus), output_dir=str(tmp_path / sub), seed=0,
        pretrain_iters=2, adversarial_iters=2, batch_size=2, patch_size=8,
        lr=1e-3, lr_milestones=[2], gen_width=4, disc_width=4,
    )
    cfg.update(over)
    path = tmp_path / f"{sub}.json"
    path.write_text(json.dumps(cfg))
    return path, cfg


class TestTrain:
    def test_zero_iteration_run(self, tmp_path):
        cfg_path, cfg = _train_config(
            tmp_path, "zero", pretrain_iters=0, adversarial_iters=0
        )
        proc = run_cli("train", "--config", str(cfg_path))
        assert proc.returncode == 0, proc.stderr
        out = tmp_path / "zero"
        history = (out / "history.csv").read_text().splitlines()
        assert len(history) == 1  # header only
        state = load_checkpoint(out / "checkpoint.hvgn")
        g, d = init_networks(0, 1, 4, 4)
        for p in g.params() + d.params():
            assert np.array_equal(state[p.name], p.data)

    def test_manifest_snapshot_is_byte_identical(self, tmp_path):
        cfg_path, _ = _train_config(tmp_path, "mani")
        proc = run_cli("train", "--config", str(cfg_path))
        assert proc.returncode == 0, proc.stderr
        manifest = json.loads((tmp_path / "mani" / "manifest.json").read_text())
        assert manifest["config"] == cfg_path.read_text()
        assert manifest["seed"] == 0
        outs = [p.split("/")[-1] for p in manifest["outputs"]]
        assert outs == ["pretrain.csv", "history.csv", "checkpoint.hvgn"]

    def test_repeat_runs_are_byte_identical(self, tmp_path):
        p1, _ = _train_config(tmp_path, "r1")
        p2, _ = _train_config(tmp_path, "r2")
        assert run_cli("train", "--config", str(p1)).returncode == 0
        assert run_cli("train", "--config", str(p2)).returncode == 0
        h1 = (tmp_path / "r1" / "history.csv").read_bytes()
        h2 = (tmp_path / "r2" / "history.csv").read_bytes()
        assert h1 == h2

    def test_unknown_config_key_named(self, tmp_path):
        cfg_path, cfg = _train_config(tmp_path, "bad")
        cfg["foo"] = 1
        cfg_path.write_text(json.dumps(cfg))
        proc = run_cli("train", "--config", str(cfg_path))
        assert proc.returncode == 1
        assert "foo" in proc.stderr

    def test_missing_dataset_is_io_error(self, tmp_path):
        cfg_path, cfg = _train_config(tmp_path, "nods")
        cfg["dataset"] = str(tmp_path / "absent")
        cfg_path.write_text(json.dumps(cfg))
        proc = run_cli("train", "--config", str(cfg_path))
        assert proc.returncode == 2
        assert "absent" in proc.stderr

    def test_malformed_json_is_validation_error(self, tmp_path):
        cfg_path = tmp_path / "broken.json"
        cfg_path.write_text("{not json")
        proc = run_cli("train", "--config", str(cfg_path))
        assert proc.returncode == 1

    def test_prints_history_path(self, tmp_path):
        cfg_path, _ = _train_config(tmp_path, "msg")
        proc = run_cli("train", "--config", str(cfg_path))
        assert proc.stdout.startswith("wrote ")
        assert proc.stdout.strip().endswith("history.csv")


@pytest.fixture(scope="module")
def compare_run(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("compare")
    corpus = tmp_path / "corpus"
    write_corpus(corpus, seed=0, count=2, size=24)
    eval_img = tmp_path / "eval.pgm"
    size_16 = np.random.default_rng(132).integers(0, 256, size=(16, 16))
    _write_pgm(eval_img, size_16)
    cfg = dict(
        dataset=str(corpus), output_dir=str(tmp_path / "out"), seed=0,
        pretrain_iters=2, adversarial_iters=2, batch_size=2, patch_size=8,
        lr=1e-3, lr_milestones=[2], gen_width=4, disc_width=4,
        eval_list=[str(eval_img)],
    )
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    proc = run_cli("compare", "--config", str(cfg_path))
    return tmp_path / "out", proc


class TestCompare:
    def test_exit_and_results_table(self, compare_run):
        out, proc = compare_run
        assert proc.returncode == 0, proc.stderr
        lines = (out / "results.csv").read_text().splitlines()
        assert lines[0] == "mode,psnr,ssim,gmsd,clamp_events"
        assert [ln.split(",")[0] for ln in lines[1:]] == [
            "linear", "hv_log", "hv_log_norm",
        ]

    def test_checkpoint_hash_is_logged_and_correct(self, compare_run):
        out, proc = compare_run
        sha = hashlib.sha256((out / "pretrained.hvgn").read_bytes()).hexdigest()
        assert sha in proc.stdout
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["pretrained_checkpoint_sha256"] == sha

    def test_hv_mode_rows_agree(self, compare_run):
        out, _ = compare_run
        lines = (out / "results.csv").read_text().splitlines()
        by_mode = {ln.split(",")[0]: ln.split(",")[1:] for ln in lines[1:]}
        assert by_mode["hv_log"] == by_mode["hv_log_norm"]

    def test_per_mode_histories_written(self, compare_run):
        out, _ = compare_run
        for mode in ("linear", "hv_log", "hv_log_norm"):
            history = (out / mode / "history.csv").read_text().splitlines()
            assert len(history) == 3

    def test_missing_eval_list_rejected(self, tmp_path):
        cfg_path, _ = _train_config(tmp_path, "noev")
        proc = run_cli("compare", "--config", str(cfg_path))
        assert proc.returncode == 1
        assert "eval_list" in proc.stderr


@pytest.fixture(scope="module")
def gradcheck_out():
    return run_cli("gradcheck")


class TestGradcheck:
    def test_exit_zero(self, gradcheck_out):
        assert gradcheck_out.returncode == 0, gradcheck_out.stderr

    def test_lists_every_primitive_once(self, gradcheck_out):
        from hvgan.autodiff import PRIMITIVES

        names = [line.split()[0] for line in gradcheck_out.stdout.splitlines()]
        assert names == sorted(PRIMITIVES)

    def test_errors_parse_and_pass_the_gate(self, gradcheck_out):
        for line in gradcheck_out.stdout.splitlines():
            err = float(line.split()[1])
            assert math.isfinite(err) and err <= 1e-4


class TestSynthCommand:
    def test_writes_corpus(self, tmp_path):
        proc = run_cli("synth", "--out", str(tmp_path / "c"),
                       "--count", "3", "--size", "16")
        assert proc.returncode == 0
        assert proc.stdout == f"wrote 3 images to {tmp_path / 'c'}\n"
        assert sorted(p.name for p in (tmp_path / "c").iterdir()) == [
            "img_000.pgm", "img_001.pgm", "img_002.pgm",
        ]


class TestMisc:
    def test_version(self):
        from hvgan import __version__

        proc = run_cli("--version")
        assert proc.returncode == 0
        assert proc.stdout.strip() == f"hvgan {__version__}"

    def test_no_subcommand_is_usage_error(self):
        assert run_cli().returncode == 2
