"""Command-line surface: argument handling, exit codes, and the on-disk
artifacts each subcommand produces.

All invocations go through ``main(argv)`` in-process.  A module-scoped
workspace runs ``features`` and a 5-step tiny ``train`` once; the sample and
diagnose tests reuse its checkpoint and mel caches.
"""

import numpy as np
import pytest

from vewave.cli import main
from vewave.config import load_config, parse_config_text
from vewave.features import Waveform, read_wav, write_wav

# Small but internally consistent run: model hop 4*4 = 16 == feature hop.
TINY_SETS = {
    "feature.hop_length": "16",
    "feature.win_length": "64",
    "feature.n_fft": "64",
    "feature.n_mels": "6",
    "model.residual_layers": "2",
    "model.residual_channels": "4",
    "model.skip_channels": "4",
    "model.dilation_cycle": "2",
    "model.mel_bins": "6",
    "model.upsample_strides": "4,4",
    "model.time_embed_dim": "8",
    "train.segment_length": "64",
    "train.max_steps": "5",
    "train.checkpoint_every": "5",
    "train.batch_size": "1",
    "sample.n_steps": "4",
}

SAMPLE_RATE = 22050
CLIP_LEN = 4096  # 256 hop-16 frames


def write_clips(data_dir, names, seed=7):
    data_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    t = np.arange(CLIP_LEN) / SAMPLE_RATE
    for i, name in enumerate(names):
        x = 0.4 * np.sin(2 * np.pi * (220.0 + 110.0 * i) * t)
        x = x + 0.02 * rng.standard_normal(CLIP_LEN)
        write_wav(data_dir / f"{name}.wav", Waveform(samples=x, sample_rate=SAMPLE_RATE))


def cli_args(root, *command, sets=(), seed=None):
    merged = dict(TINY_SETS)
    merged["paths.dataset_dir"] = str(root / "data")
    merged["paths.cache_dir"] = str(root / "cache")
    merged["paths.checkpoint_dir"] = str(root / "ckpt")
    merged["paths.output_dir"] = str(root / "out")
    merged.update(dict(sets))
    argv = ["--preset", "wide"]
    for key, value in merged.items():
        argv += ["--set", f"{key}={value}"]
    if seed is not None:
        argv += ["--seed", str(seed)]
    argv += list(command)
    return argv


@pytest.fixture(scope="module")
def station(tmp_path_factory):
    """A workspace with extracted features and a 5-step trained checkpoint."""
    root = tmp_path_factory.mktemp("cli")
    write_clips(root / "data", ("alpha", "beta"))
    assert main(cli_args(root, "features")) == 0
    assert main(cli_args(root, "train")) == 0
    assert (root / "ckpt" / "step_5.ckpt").exists()
    return root


class TestGlobalFlags:
    def test_no_command_is_a_usage_error(self, capsys):
        assert main([]) == 2
        assert "a command is required" in capsys.readouterr().err

    def test_print_config_round_trips(self, capsys):
        assert main(["--print-config"]) == 0
        out = capsys.readouterr().out
        assert parse_config_text(out) == load_config(None, preset="wide")

    def test_print_config_respects_preset(self, capsys):
        assert main(["--preset", "paper", "--print-config"]) == 0
        assert "sde.sigma1 = 0.01648721270700128" in capsys.readouterr().out

    def test_seed_flag_overrides_both_seeds(self, capsys):
        assert main(["--seed", "123", "--print-config"]) == 0
        out = capsys.readouterr().out
        assert "train.seed = 123" in out
        assert "sample.seed = 123" in out

    def test_set_without_equals(self, capsys):
        assert main(["--set", "train.seed", "--print-config"]) == 2
        assert "--set expects KEY=VALUE" in capsys.readouterr().err

    def test_set_unknown_key(self, capsys):
        assert main(["--set", "sde.gamma=1", "--print-config"]) == 2
        assert "unknown configuration key" in capsys.readouterr().err

    def test_set_bad_value(self, capsys):
        assert main(["--set", "train.max_steps=soon", "--print-config"]) == 2
        assert "expected an integer" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["--config", str(tmp_path / "nope.cfg"), "--print-config"]) == 2
        assert "config file not found" in capsys.readouterr().err

    def test_cross_validation_failure(self, capsys):
        assert main(["--set", "model.upsample_strides=4,4", "--print-config"]) == 2
        assert "upsample_strides product 16" in capsys.readouterr().err

    def test_unknown_preset_exits_via_argparse(self):
        with pytest.raises(SystemExit) as exc:
            main(["--preset", "huge", "--print-config"])
        assert exc.value.code == 2


class TestFeatures:
    def test_writes_caches_and_manifest(self, station):
        cache = station / "cache"
        assert (cache / "alpha.mel").exists()
        assert (cache / "beta.mel").exists()
        manifest = (cache / "manifest.tsv").read_text()
        assert manifest == "clip\tsplit\nalpha\ttrain\nbeta\ttrain\n"

    def test_rerun_is_byte_identical(self, station, tmp_path):
        sets = {"paths.cache_dir": str(tmp_path / "cache2")}
        assert main(cli_args(station, "features", sets=sets)) == 0
        for name in ("alpha.mel", "beta.mel", "manifest.tsv"):
            a = (station / "cache" / name).read_bytes()
            b = (tmp_path / "cache2" / name).read_bytes()
            assert a == b, name

    def test_split_proportions_with_four_clips(self, tmp_path, capsys):
        root = tmp_path
        write_clips(root / "data", ("a", "b", "c", "d"))
        assert main(cli_args(root, "features")) == 0
        lines = (root / "cache" / "manifest.tsv").read_text().splitlines()[1:]
        parts = [line.split("\t")[1] for line in lines]
        assert sorted(parts) == ["test", "train", "train", "valid"]

    def test_corrupt_wav_is_skipped(self, tmp_path, capsys):
        root = tmp_path
        write_clips(root / "data", ("good",))
        (root / "data" / "bad.wav").write_bytes(b"not really a wav file")
        assert main(cli_args(root, "features")) == 0
        assert "skipping bad.wav" in capsys.readouterr().err
        manifest = (root / "cache" / "manifest.tsv").read_text()
        assert "bad" not in manifest
        assert "good\ttrain" in manifest

    def test_all_inputs_corrupt(self, tmp_path, capsys):
        (tmp_path / "data").mkdir()
        (tmp_path / "data" / "bad.wav").write_bytes(b"junk")
        assert main(cli_args(tmp_path, "features")) == 3
        assert "all 1 input files failed" in capsys.readouterr().err

    def test_missing_input_dir(self, tmp_path, capsys):
        assert main(cli_args(tmp_path, "features")) == 3
        assert "input directory not found" in capsys.readouterr().err

    def test_empty_input_dir(self, tmp_path, capsys):
        (tmp_path / "data").mkdir()
        assert main(cli_args(tmp_path, "features")) == 3
        assert "no input files" in capsys.readouterr().err

    def test_input_dir_flag_overrides_paths(self, tmp_path, capsys):
        alt = tmp_path / "elsewhere"
        write_clips(alt, ("solo",))
        args = cli_args(tmp_path, "features", "--input-dir", str(alt))
        assert main(args) == 0
        assert (tmp_path / "cache" / "solo.mel").exists()


class TestTrain:
    def test_checkpoint_and_metrics_written(self, station):
        assert (station / "ckpt" / "step_5.ckpt").exists()
        lines = (station / "ckpt" / "metrics.tsv").read_text().splitlines()
        assert lines[0] == "step\tloss\tlearning_rate\twall_ms"
        assert len(lines) == 6  # header + 5 steps

    def test_rerun_resumes_cleanly(self, station, capsys):
        assert main(cli_args(station, "train")) == 0
        assert "step_5.ckpt" in capsys.readouterr().err

    def test_missing_manifest(self, tmp_path, capsys):
        write_clips(tmp_path / "data", ("a",))
        assert main(cli_args(tmp_path, "train")) == 3
        assert "run `vewave features` first" in capsys.readouterr().err

    def test_manifest_with_no_training_clips(self, tmp_path, capsys):
        cache = tmp_path / "cache"
        cache.mkdir()
        (cache / "manifest.tsv").write_text("clip\tsplit\nx\ttest\n")
        assert main(cli_args(tmp_path, "train")) == 3
        assert "manifest has no training clips" in capsys.readouterr().err

    def test_divergence_exits_4(self, station, tmp_path, capsys):
        sets = {
            "train.adam.learning_rate": "1e9",
            "paths.checkpoint_dir": str(tmp_path / "ckpt_div"),
        }
        assert main(cli_args(station, "train", sets=sets)) == 4
        err = capsys.readouterr().err
        assert "error:" in err


class TestSample:
    def test_generates_final_wav(self, station, capsys):
        mel = station / "cache" / "alpha.mel"
        ckpt = station / "ckpt" / "step_5.ckpt"
        args = cli_args(station, "sample", "--checkpoint", str(ckpt),
                        "--mel", str(mel))
        assert main(args) == 0
        out = station / "out"
        wav = read_wav(out / "alpha_gen.wav")
        # a cached mel of n frames yields n*hop samples (centered STFT: 257 frames)
        assert len(wav) == (CLIP_LEN // 16 + 1) * 16
        assert wav.sample_rate == SAMPLE_RATE
        assert np.all(np.abs(wav.samples) <= 1.0)
        assert not (out / "trajectory_stats.tsv").exists()
        assert not list(out.glob("step_*.wav"))

    def test_snapshots_and_stats(self, station, tmp_path):
        mel = station / "cache" / "beta.mel"
        ckpt = station / "ckpt" / "step_5.ckpt"
        out = tmp_path / "out"
        args = cli_args(station, "sample", "--checkpoint", str(ckpt),
                        "--mel", str(mel), "--snapshots", "4,2",
                        sets={"paths.output_dir": str(out)})
        assert main(args) == 0
        assert (out / "beta_gen.wav").exists()
        assert (out / "step_4.wav").exists()
        assert (out / "step_2.wav").exists()
        assert not (out / "step_0.wav").exists()
        lines = (out / "trajectory_stats.tsv").read_text().splitlines()
        assert lines[0] == "step\trms\tmin\tmax"
        assert [line.split("\t")[0] for line in lines[1:]] == ["4", "2", "0"]
        # level 4 is the untouched prior draw: RMS near sigma1 = 1
        rms_prior = float(lines[1].split("\t")[1])
        assert 0.8 < rms_prior < 1.2

    def test_same_seed_is_byte_identical(self, station, tmp_path):
        mel = station / "cache" / "alpha.mel"
        ckpt = station / "ckpt" / "step_5.ckpt"
        outs = []
        for sub in ("one", "two"):
            out = tmp_path / sub
            args = cli_args(station, "sample", "--checkpoint", str(ckpt),
                            "--mel", str(mel), seed=11,
                            sets={"paths.output_dir": str(out)})
            assert main(args) == 0
            outs.append((out / "alpha_gen.wav").read_bytes())
        assert outs[0] == outs[1]

    def test_different_seed_differs(self, station, tmp_path):
        mel = station / "cache" / "alpha.mel"
        ckpt = station / "ckpt" / "step_5.ckpt"
        waves = []
        for seed, sub in ((11, "one"), (12, "two")):
            out = tmp_path / sub
            args = cli_args(station, "sample", "--checkpoint", str(ckpt),
                            "--mel", str(mel), seed=seed,
                            sets={"paths.output_dir": str(out)})
            assert main(args) == 0
            waves.append((out / "alpha_gen.wav").read_bytes())
        assert waves[0] != waves[1]

    def test_wav_as_mel_source(self, station, tmp_path):
        wav_in = station / "data" / "alpha.wav"
        ckpt = station / "ckpt" / "step_5.ckpt"
        out = tmp_path / "out"
        args = cli_args(station, "sample", "--checkpoint", str(ckpt),
                        "--mel", str(wav_in),
                        sets={"paths.output_dir": str(out)})
        assert main(args) == 0
        assert (out / "alpha_gen.wav").exists()

    def test_missing_checkpoint(self, station, capsys):
        mel = station / "cache" / "alpha.mel"
        args = cli_args(station, "sample", "--checkpoint", "/no/such.ckpt",
                        "--mel", str(mel))
        assert main(args) == 3
        assert "checkpoint not found" in capsys.readouterr().err

    def test_missing_mel_source(self, station, capsys):
        ckpt = station / "ckpt" / "step_5.ckpt"
        args = cli_args(station, "sample", "--checkpoint", str(ckpt),
                        "--mel", "/no/such.mel")
        assert main(args) == 3
        assert "mel source not found" in capsys.readouterr().err

    def test_snapshot_level_out_of_range(self, station, capsys):
        mel = station / "cache" / "alpha.mel"
        ckpt = station / "ckpt" / "step_5.ckpt"
        args = cli_args(station, "sample", "--checkpoint", str(ckpt),
                        "--mel", str(mel), "--snapshots", "99")
        assert main(args) == 2
        assert "out of range [0, 4]" in capsys.readouterr().err

    def test_snapshot_levels_not_integers(self, station, capsys):
        mel = station / "cache" / "alpha.mel"
        ckpt = station / "ckpt" / "step_5.ckpt"
        args = cli_args(station, "sample", "--checkpoint", str(ckpt),
                        "--mel", str(mel), "--snapshots", "a,b")
        assert main(args) == 2
        assert "comma-separated integers" in capsys.readouterr().err

    def test_feature_fingerprint_mismatch(self, station, tmp_path, capsys):
        # cache was written with fmax=8000; loading under fmax=7000 must refuse
        mel = station / "cache" / "alpha.mel"
        ckpt = station / "ckpt" / "step_5.ckpt"
        args = cli_args(station, "sample", "--checkpoint", str(ckpt),
                        "--mel", str(mel),
                        sets={"feature.fmax": "7000.0",
                              "paths.output_dir": str(tmp_path / "out")})
        assert main(args) == 3


class TestDiagnose:
    def test_default_levels_cover_the_trajectory(self, station, tmp_path):
        mel = station / "cache" / "alpha.mel"
        ckpt = station / "ckpt" / "step_5.ckpt"
        out = tmp_path / "out"
        args = cli_args(station, "diagnose", "--checkpoint", str(ckpt),
                        "--mel", str(mel),
                        sets={"paths.output_dir": str(out)})
        assert main(args) == 0
        # n_steps=4: default levels are every time level 0..4
        for level in (1, 2, 3, 4):
            assert (out / f"step_{level}.wav").exists()
        lines = (out / "trajectory_stats.tsv").read_text().splitlines()
        assert [line.split("\t")[0] for line in lines[1:]] == ["4", "3", "2", "1", "0"]


class TestValidate:
    def test_fast_battery_passes(self, capsys):
        assert main(["validate", "--fast"]) == 0
        captured = capsys.readouterr()
        assert "moment_ode_paper" in captured.out
        assert "langevin" in captured.out
        assert "FAIL" not in captured.out
        assert "checks passed" in captured.err
