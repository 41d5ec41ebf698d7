"""Command-line surface: features, train, sample, diagnose, validate.

Exit codes: 0 success, 2 configuration/usage error, 3 data error,
4 numerical failure.  Every command is deterministic under --seed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, load_into
from .config import PRESETS, load_config, serialize_config
from .errors import ConfigError, DataError, NumericalError, UsageError, VewaveError
from .features import (
    Waveform,
    aligned_frames,
    load_mel,
    mel_spectrogram,
    read_wav,
    save_mel,
    write_wav,
)
from .sampler import generate, trajectory_stats
from .scorenet import ScoreNet
from .training import ClipDataset, train


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vewave",
        description="Diffusion vocoder: mel-conditioned waveform synthesis "
                    "via a variance-exploding SDE.",
    )
    parser.add_argument("--config", metavar="PATH", help="key = value configuration file")
    parser.add_argument("--preset", choices=PRESETS, default="wide",
                        help="base configuration preset (default: wide)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override train.seed and sample.seed")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    parser.add_argument("--print-config", action="store_true",
                        help="print the effective configuration and exit")

    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("features", help="extract mel caches and a split manifest")
    p.add_argument("--input-dir", metavar="DIR",
                   help="directory of WAV files (default: paths.dataset_dir)")

    sub.add_parser("train", help="run DSM training (auto-resumes from the "
                                 "latest checkpoint)")

    p = sub.add_parser("sample", help="generate waveforms from mel conditioning")
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.add_argument("--mel", required=True, metavar="PATH",
                   help="mel cache (.mel) or WAV to take features from")
    p.add_argument("--snapshots", metavar="LEVELS",
                   help="comma-separated diffusion time levels to dump as WAVs "
                        "(level N = initial noise, level 0 = final output)")

    p = sub.add_parser("diagnose", help="step-by-step trajectory dump "
                                        "(per-level RMS table + snapshot WAVs)")
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.add_argument("--mel", required=True, metavar="PATH")
    p.add_argument("--snapshots", metavar="LEVELS",
                   help="time levels to dump (default: 10 evenly spaced)")

    p = sub.add_parser("validate", help="run the analytic validation battery")
    p.add_argument("--fast", action="store_true",
                   help="smaller sample counts (CI speed)")

    return parser


def _effective_config(args):
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if args.seed is not None:
        overrides["train.seed"] = str(args.seed)
        overrides["sample.seed"] = str(args.seed)
    return load_config(args.config, preset=args.preset, overrides=overrides)


# ---- commands ---------------------------------------------------------------


def cmd_features(cfg, input_dir: str | None, log) -> int:
    in_dir = Path(input_dir or cfg.paths.dataset_dir)
    if not in_dir.is_dir():
        raise DataError(f"input directory not found: {in_dir}")
    wavs = sorted(in_dir.glob("*.wav"))
    if not wavs:
        raise DataError(f"no input files: {in_dir} contains no .wav files")
    cache_dir = Path(cfg.paths.cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    done, failed = [], []
    for path in wavs:
        try:
            wav = read_wav(path)
            mel = mel_spectrogram(wav, cfg.feature)
        except (DataError, VewaveError) as e:
            log(f"skipping {path.name}: {e}")
            failed.append(path.name)
            continue
        save_mel(cache_dir / (path.stem + ".mel"), mel)
        done.append(path.stem)
        log(f"{path.name}: {mel.n_frames} frames")
    if not done:
        raise DataError(f"all {len(failed)} input files failed feature extraction")

    # seeded split mirroring a 13000/50/50 proportion
    rng = np.random.default_rng(cfg.train.seed)
    order = list(done)
    rng.shuffle(order)
    n = len(order)
    n_eval = max(1, round(n * 50 / 13100)) if n >= 3 else 0
    split = {}
    for i, stem in enumerate(order):
        split[stem] = "test" if i < n_eval else "valid" if i < 2 * n_eval else "train"
    with open(cache_dir / "manifest.tsv", "w") as f:
        f.write("clip\tsplit\n")
        for stem in sorted(done):
            f.write(f"{stem}\t{split[stem]}\n")
    log(f"wrote {len(done)} mel caches and manifest.tsv to {cache_dir}")
    return 0


def _load_manifest(cache_dir: Path) -> dict:
    manifest = cache_dir / "manifest.tsv"
    if not manifest.exists():
        raise DataError(f"{manifest} not found; run `vewave features` first")
    split = {}
    for line in manifest.read_text().splitlines()[1:]:
        if line.strip():
            stem, part = line.split("\t")
            split[stem] = part
    return split


def cmd_train(cfg, log) -> int:
    cache_dir = Path(cfg.paths.cache_dir)
    dataset_dir = Path(cfg.paths.dataset_dir)
    hop = cfg.feature.hop_length
    items = []
    for stem, part in sorted(_load_manifest(cache_dir).items()):
        if part != "train":
            continue
        mel = load_mel(cache_dir / (stem + ".mel"), cfg.feature)
        wav = read_wav(dataset_dir / (stem + ".wav"))
        if wav.sample_rate != cfg.feature.sample_rate:
            raise DataError(
                f"{stem}.wav: sample rate {wav.sample_rate} != configured "
                f"{cfg.feature.sample_rate}"
            )
        n = (len(wav) // hop) * hop
        items.append((wav.samples[:n], aligned_frames(mel, n, hop)))
    if not items:
        raise DataError("manifest has no training clips")
    dataset = ClipDataset(items=items, hop=hop)
    rng = np.random.default_rng(cfg.train.seed)
    net = ScoreNet(cfg.model, cfg.sde, rng)
    log(f"training on {len(items)} clips, {len(net.parameters())} parameter tensors")
    train(dataset, net, cfg.sde, cfg.train, cfg.paths.checkpoint_dir,
          resume=True, log=log)
    return 0


def _restore_net(cfg, checkpoint_path) -> ScoreNet:
    path = Path(checkpoint_path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    net = ScoreNet(cfg.model, cfg.sde, np.random.default_rng(0))
    load_into(net.parameters(), load_checkpoint(path))
    return net


def _load_mel_source(cfg, mel_path):
    path = Path(mel_path)
    if not path.exists():
        raise DataError(f"mel source not found: {path}")
    if path.suffix == ".wav":
        wav = read_wav(path)
        mel = mel_spectrogram(wav, cfg.feature)
        n = (len(wav) // cfg.feature.hop_length) * cfg.feature.hop_length
        return aligned_frames(mel, n, cfg.feature.hop_length), path.stem
    mel = load_mel(path, cfg.feature)  # fingerprint enforced here
    return mel.frames, path.stem


def _parse_levels(raw: str | None, n_steps: int):
    if raw is None:
        return ()
    try:
        levels = tuple(int(x) for x in raw.split(",") if x.strip())
    except ValueError:
        raise UsageError(f"--snapshots expects comma-separated integers, got {raw!r}") from None
    bad = [k for k in levels if k < 0 or k > n_steps]
    if bad:
        raise UsageError(f"snapshot levels out of range [0, {n_steps}]: {bad}")
    return levels


def _write_outputs(cfg, stem, wave_out, traj, out_dir: Path, log,
                   write_stats: bool, sample_rate: int):
    out_dir.mkdir(parents=True, exist_ok=True)
    final = np.clip(wave_out, -1.0, 1.0)
    final_path = out_dir / f"{stem}_gen.wav"
    write_wav(final_path, Waveform(samples=final, sample_rate=sample_rate))
    log(f"wrote {final_path}")
    recorded = [s for s in traj.steps() if s != 0] if len(traj.snapshots) > 1 else []
    for level in recorded:
        snap = np.clip(traj.state_at(level)[0], -1.0, 1.0)
        write_wav(out_dir / f"step_{level}.wav",
                  Waveform(samples=snap, sample_rate=sample_rate))
    if recorded:
        log(f"wrote {len(recorded)} snapshot WAVs")
    if write_stats:
        rows = trajectory_stats(traj)
        with open(out_dir / "trajectory_stats.tsv", "w") as f:
            f.write("step\trms\tmin\tmax\n")
            for step, rms, lo, hi in rows:
                f.write(f"{step}\t{rms:.8g}\t{lo:.8g}\t{hi:.8g}\n")
        log(f"wrote {out_dir / 'trajectory_stats.tsv'}")


def cmd_sample(cfg, checkpoint, mel_path, snapshots_raw, log,
               force_stats: bool = False, default_levels=()) -> int:
    net = _restore_net(cfg, checkpoint)
    mel_frames, stem = _load_mel_source(cfg, mel_path)
    sample_cfg = cfg.sample
    levels = _parse_levels(snapshots_raw, sample_cfg.n_steps) or tuple(default_levels)
    if levels:
        sample_cfg = type(sample_cfg)(**{**sample_cfg.__dict__, "snapshot_steps": levels})
    log(f"generating {mel_frames.shape[0] * cfg.feature.hop_length} samples "
        f"({mel_frames.shape[0]} frames) over {sample_cfg.n_steps} levels")
    wave_out, traj = generate(mel_frames, net, cfg.sde, sample_cfg)
    _write_outputs(cfg, stem, wave_out, traj, Path(cfg.paths.output_dir), log,
                   write_stats=force_stats or bool(levels),
                   sample_rate=cfg.feature.sample_rate)
    return 0


def cmd_diagnose(cfg, checkpoint, mel_path, snapshots_raw, log) -> int:
    n = cfg.sample.n_steps
    default_levels = sorted({round(i * n / 10) for i in range(11)})
    return cmd_sample(cfg, checkpoint, mel_path, snapshots_raw, log,
                      force_stats=True, default_levels=default_levels)


def cmd_validate(cfg, fast: bool, log) -> int:
    from .validate import render_table, run_battery

    rows = run_battery(seed=cfg.sample.seed, fast=fast)
    print(render_table(rows))
    failures = [r.name for r in rows if not r.passed]
    if failures:
        raise NumericalError(f"validation failed: {', '.join(failures)}")
    log(f"all {len(rows)} checks passed")
    return 0


# ---- entry point -------------------------------------------------------------


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)

    def log(msg):
        print(msg, file=sys.stderr)

    try:
        cfg = _effective_config(args)
        if args.print_config:
            print(serialize_config(cfg), end="")
            return 0
        if args.command is None:
            parser.print_help(sys.stderr)
            raise UsageError("a command is required (or use --print-config)")
        if args.command == "features":
            return cmd_features(cfg, args.input_dir, log)
        if args.command == "train":
            return cmd_train(cfg, log)
        if args.command == "sample":
            return cmd_sample(cfg, args.checkpoint, args.mel, args.snapshots, log)
        if args.command == "diagnose":
            return cmd_diagnose(cfg, args.checkpoint, args.mel, args.snapshots, log)
        if args.command == "validate":
            return cmd_validate(cfg, args.fast, log)
        raise UsageError(f"unknown command {args.command!r}")
    except (UsageError, ConfigError) as e:
        log(f"error: {e}")
        return 2
    except DataError as e:
        log(f"error: {e}")
        return 3
    except NumericalError as e:
        log(f"error: {e}")
        return 4


if __name__ == "__main__":
    sys.exit(main())
