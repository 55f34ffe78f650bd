import numpy as np
import pytest

from blindsr.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, dispatch
from blindsr.config import load_config
from blindsr.fileio import load_png, load_tensor, save_png
from helpers import make_images


@pytest.fixture()
def image_dir(tmp_path):
    d = tmp_path / "imgs"
    d.mkdir()
    for i, img in enumerate(make_images(4, 40, seed=2)):
        save_png(d / f"img_{i}.png", img)
    return d


@pytest.fixture()
def hr_png(tmp_path):
    path = tmp_path / "hr.png"
    save_png(path, make_images(1, 32, seed=1)[0])
    return path


TINY_OVERRIDES = [
    "--override", "model.channels=8",
    "--override", "model.n_groups=1",
    "--override", "model.n_rcab_per_group=1",
    "--override", "model.ca_reduction=4",
    "--override", "model.blur_kernel_size=5",
    "--override", "train.batch=2",
    "--override", "train.lr_patch=8",
    "--override", "train.log_every=1",
    "--override", "train.checkpoint_every=0",
]


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self, capsys):
        assert dispatch(["degrade", "--bogus"]) == EXIT_USAGE
        assert "usage error" in capsys.readouterr().err

    def test_unknown_command_is_usage_error(self):
        assert dispatch(["explode"]) == EXIT_USAGE

    def test_missing_input_file_is_runtime_error(self, tmp_path, capsys):
        code = dispatch(["degrade", "--in", str(tmp_path / "nope.png"),
                         "--out-dir", str(tmp_path)])
        assert code == EXIT_RUNTIME
        assert "error" in capsys.readouterr().err

    def test_bad_override_is_usage_error(self, tmp_path, image_dir):
        code = dispatch(["train", "--data-dir", str(image_dir),
                         "--out-dir", str(tmp_path / "o"),
                         "--override", "nosuch.key=1", "--dry-run"])
        assert code == EXIT_RUNTIME or code == EXIT_USAGE


class TestDegrade:
    def test_bit_identical_across_runs(self, tmp_path, hr_png):
        outs = []
        for run in ("a", "b"):
            out = tmp_path / run
            code = dispatch(["degrade", "--in", str(hr_png), "--scale", "4",
                             "--kernel-width", "1.3", "--noise", "15", "--seed", "7",
                             "--out-dir", str(out)])
            assert code == EXIT_OK
            outs.append((out / "hr_x4_lr.png").read_bytes())
        assert outs[0] == outs[1]

    def test_artifacts_written(self, tmp_path, hr_png):
        out = tmp_path / "o"
        assert dispatch(["degrade", "--in", str(hr_png), "--scale", "2",
                         "--kernel-width", "2.0", "--noise", "25", "--seed", "3",
                         "--out-dir", str(out)]) == EXIT_OK
        lr = load_png(out / "hr_x2_lr.png")
        assert lr.shape == (16, 16, 3)
        kernel = load_tensor(out / "hr_x2_kernel.bsrt")
        assert kernel.shape == (15, 15)
        assert abs(kernel.sum() - 1.0) < 1e-5
        noise = load_tensor(out / "hr_x2_noise.bsrt")
        assert noise.shape == (16, 16, 3)
        assert (out / "effective-config.ini").exists()


class TestPcaCommand:
    def test_writes_projection(self, tmp_path):
        out = tmp_path / "o"
        assert dispatch(["pca", "--pool-size", "100", "--kernel-size", "5",
                         "--dim", "10", "--seed", "1", "--out-dir", str(out)]) == EXIT_OK
        mat = load_tensor(out / "pca.bsrt")
        assert mat.shape == (10, 25)
        gram = mat.astype(np.float64) @ mat.astype(np.float64).T
        assert np.abs(gram - np.eye(10)).max() < 1e-6


class TestTrainCommand:
    def test_dry_run_validates_without_side_effects(self, tmp_path, image_dir, capsys):
        out = tmp_path / "o"
        code = dispatch(["train", "--data-dir", str(image_dir), "--out-dir", str(out),
                         *TINY_OVERRIDES, "--dry-run"])
        assert code == EXIT_OK
        assert "[model]" in capsys.readouterr().out
        assert not out.exists() or not any(out.iterdir())

    def test_override_recorded_in_snapshot(self, tmp_path, image_dir):
        out = tmp_path / "o"
        code = dispatch(["train", "--data-dir", str(image_dir), "--out-dir", str(out),
                         *TINY_OVERRIDES, "--override", "train.total_iters=2000",
                         "--iters", "2", "--seed", "5"])
        assert code == EXIT_OK
        snap = load_config(out / "effective-config.ini")
        assert snap.train.total_iters == 2000
        assert snap.train.seed == 5

    def test_training_artifacts(self, tmp_path, image_dir):
        out = tmp_path / "o"
        code = dispatch(["train", "--data-dir", str(image_dir), "--out-dir", str(out),
                         *TINY_OVERRIDES, "--iters", "3", "--seed", "0"])
        assert code == EXIT_OK
        assert (out / "checkpoint_final.npz").exists()
        assert (out / "pca.bsrt").exists()
        log = (out / "train_log.csv").read_text().strip().splitlines()
        assert log[0].startswith("iteration,re,dr,dc_lr,dc_noise,dc_kernel,total,lr_rate")
        assert len(log) == 4  # header + 3 logged steps


@pytest.fixture()
def trained_checkpoint(tmp_path, image_dir):
    out = tmp_path / "trainrun"
    code = dispatch(["train", "--data-dir", str(image_dir), "--out-dir", str(out),
                     *TINY_OVERRIDES, "--iters", "2", "--seed", "0"])
    assert code == EXIT_OK
    return out / "checkpoint_final.npz"


class TestInferCommand:
    def test_super_resolves_png(self, tmp_path, trained_checkpoint, hr_png):
        out = tmp_path / "sr"
        code = dispatch(["infer", "--checkpoint", str(trained_checkpoint),
                         "--in", str(hr_png), "--out-dir", str(out)])
        assert code == EXIT_OK
        sr = load_png(out / "hr_sr.png")
        assert sr.shape == (64, 64, 3)

    def test_save_degradation_estimates(self, tmp_path, trained_checkpoint, hr_png):
        out = tmp_path / "sr2"
        code = dispatch(["infer", "--checkpoint", str(trained_checkpoint),
                         "--in", str(hr_png), "--out-dir", str(out),
                         "--save-degradation"])
        assert code == EXIT_OK
        kernel = load_tensor(out / "hr_sr.kernel.bsrt")
        assert kernel.shape == (5, 5)


class TestFinetuneCommand:
    def test_continues_from_checkpoint(self, tmp_path, image_dir, trained_checkpoint):
        out = tmp_path / "nf"
        code = dispatch(["finetune-nf", "--checkpoint", str(trained_checkpoint),
                         "--data-dir", str(image_dir), "--out-dir", str(out),
                         "--iters", "2"])
        assert code == EXIT_OK
        from blindsr.training import load_checkpoint

        state = load_checkpoint(out / "checkpoint_nf.npz")
        assert state.iteration == 4
        assert state.degradation_config.noise_range == (0.0, 0.0)


class TestEvalCommand:
    def test_baseline_full_grid_18_cells(self, tmp_path, image_dir):
        out = tmp_path / "report"
        code = dispatch(["eval", "--data-dir", str(image_dir), "--baseline",
                         "--scales", "2,3,4", "--kernel-widths", "0.2,1.3,2.6",
                         "--noise-levels", "15,50", "--kernel-size", "5",
                         "--out-dir", str(out), "--seed", "1"])
        assert code == EXIT_OK
        rows = [l for l in (out / "report.csv").read_text().splitlines()
                if l and not l.startswith("#") and not l.startswith("dataset")]
        assert len(rows) == 18
        assert (out / "report.md").exists()

    def test_checkpoint_eval_restricted_to_model_scale(self, tmp_path, image_dir,
                                                       trained_checkpoint):
        out = tmp_path / "report2"
        code = dispatch(["eval", "--data-dir", str(image_dir),
                         "--checkpoint", str(trained_checkpoint),
                         "--kernel-widths", "1.3", "--noise-levels", "15",
                         "--kernel-size", "5", "--out-dir", str(out)])
        assert code == EXIT_OK
        rows = [l for l in (out / "report.csv").read_text().splitlines()
                if l and not l.startswith("#") and not l.startswith("dataset")]
        assert len(rows) == 1
        assert rows[0].startswith("imgs,2,")


class TestWindowCommand:
    def test_24_tiles_and_manifest(self, tmp_path, hr_png):
        out = tmp_path / "win"
        code = dispatch(["window", "--in", str(hr_png), "--scale", "2",
                         "--kernel-size", "5", "--out-dir", str(out), "--seed", "2"])
        assert code == EXIT_OK
        tiles = load_png(out / "hr_window_x2.png")
        assert tiles.shape == (6 * 16, 4 * 16, 3)
        manifest = (out / "hr_window_x2_manifest.csv").read_text().strip().splitlines()
        assert len(manifest) == 25  # header + 24 tiles


class TestOutDirEnvVar:
    def test_env_default_used(self, tmp_path, hr_png, monkeypatch):
        target = tmp_path / "from_env"
        monkeypatch.setenv("BLINDSR_OUT_DIR", str(target))
        code = dispatch(["degrade", "--in", str(hr_png), "--scale", "2",
                         "--kernel-width", "1.0", "--noise", "0", "--seed", "1"])
        assert code == EXIT_OK
        assert (target / "hr_x2_lr.png").exists()
