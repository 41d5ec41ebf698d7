"""Denoising-score-matching training loop.

Each step draws aligned (waveform crop, mel slice) pairs, picks t uniformly in
[t_min, t_max], perturbs the crop through the exact transition density, and
regresses the network onto the analytic score target with Adam.

Determinism: all randomness for step k comes from a Generator seeded with
(seed, k), so a resumed run continues the exact stream a straight run would
have produced.  Metrics rows carry wall-clock time, which is the one column
excluded from bit-identity claims.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import load_checkpoint, load_into, save_checkpoint
from .errors import ConfigError, NumericalError, ShapeError
from .nn import AdamConfig, adam_step
from .sde import SdeSpec, VeSde

LOSS_NORMS = ("L1", "L2")
LOSS_WEIGHTINGS = ("none", "variance")
DIVERGENCE_LIMIT = 1e6


@dataclass
class TrainingConfig:
    batch_size: int = 1
    segment_length: int = 16384
    max_steps: int = 1000
    loss_norm: str = "L2"
    loss_weighting: str = "variance"
    adam: AdamConfig = field(default_factory=AdamConfig)
    checkpoint_every: int = 500
    seed: int = 0

    def __post_init__(self):
        for name in ("batch_size", "segment_length", "max_steps", "checkpoint_every"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v <= 0:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.loss_norm not in LOSS_NORMS:
            raise ConfigError(f"loss_norm must be one of {LOSS_NORMS}, got {self.loss_norm!r}")
        if self.loss_weighting not in LOSS_WEIGHTINGS:
            raise ConfigError(
                f"loss_weighting must be one of {LOSS_WEIGHTINGS}, got {self.loss_weighting!r}"
            )
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")


@dataclass
class TrainExample:
    x0: np.ndarray       # clean segment(s)
    mel: np.ndarray      # aligned mel slice(s)
    t: np.ndarray        # per-example noise time
    x_t: np.ndarray      # perturbed segment(s)
    target: np.ndarray   # analytic score of the transition at x_t


def step_rng(seed: int, step: int) -> np.random.Generator:
    """The one source of randomness for training step `step`."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(step,)))


def make_example(x0, mel, spec: SdeSpec, noise_source, hop: int = 256) -> TrainExample:
    """Perturb aligned (x0, mel) through the transition density.

    x0: [d] or [B, d]; mel: [frames, n_mels] or [B, frames, n_mels] with
    frames*hop == d.  t ~ Uniform[t_min, t_max] per example.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    mel = np.asarray(mel, dtype=np.float64)
    batched = x0.ndim == 2
    n_frames = mel.shape[1 if batched else 0]
    length = x0.shape[-1]
    if n_frames * hop != length:
        raise ShapeError(
            f"waveform length {length} does not match mel frames {n_frames} * hop {hop}"
        )
    b = x0.shape[0] if batched else 1
    t = noise_source.uniform(spec.t_min, spec.t_max, size=b)
    sde = VeSde(spec)
    if batched:
        x_t, target = sde.sample_transition(x0, t, noise_source)
    else:
        x_t, target = sde.sample_transition(x0, float(t[0]), noise_source)
        t = t[0]
    return TrainExample(x0=x0, mel=mel, t=t, x_t=x_t, target=target)


def dsm_loss(prediction, target, t, spec: SdeSpec, config: TrainingConfig):
    """Scalar DSM loss (keeps the autodiff graph when prediction is a Tensor).

    L2: mean over batch and dimensions of 1/2*(pred - target)^2, each
    example's term multiplied by V(t) under `variance` weighting (equivalent
    to regressing the normalized noise).  L1: mean absolute error, weighted by
    sqrt(V(t)) — the scale-stable analog.
    """
    pred = prediction if isinstance(prediction, Tensor) else Tensor(np.asarray(prediction, dtype=np.float64))
    target = np.asarray(target, dtype=np.float64)
    if tuple(pred.shape) != target.shape:
        raise ShapeError(f"prediction shape {tuple(pred.shape)} != target shape {target.shape}")
    if not np.all(np.isfinite(pred.data)):
        raise NumericalError("non-finite prediction entering the loss")
    diff = pred - Tensor(target)
    if config.loss_weighting == "variance":
        var = np.atleast_1d(VeSde(spec).transition_moments(np.asarray(t, dtype=np.float64)).variance)
        w = var.reshape(var.shape + (1,) * (target.ndim - var.ndim))
    else:
        w = np.ones(1)
    if config.loss_norm == "L2":
        return ad.reduce_mean(ad.mul(ad.scale(ad.mul(diff, diff), 0.5), Tensor(w)))
    return ad.reduce_mean(ad.mul(ad.absolute(diff), Tensor(np.sqrt(w))))


@dataclass
class ClipDataset:
    """In-memory dataset of aligned (waveform, mel-frames) clips.

    Each item is (x [d], mel [frames, n_mels]) with frames*hop == d.
    """

    items: list
    hop: int

    def __post_init__(self):
        if not self.items:
            raise ConfigError("dataset is empty")
        for i, (x, mel) in enumerate(self.items):
            if len(x) != mel.shape[0] * self.hop:
                raise ShapeError(
                    f"dataset item {i}: waveform length {len(x)} != "
                    f"{mel.shape[0]} frames * hop {self.hop}"
                )

    def sample_batch(self, batch_size: int, segment_length: int, rng):
        """Frame-aligned random crops -> (x0 [B, seg], mel [B, segf, n_mels])."""
        if segment_length % self.hop != 0:
            raise ConfigError(
                f"segment_length {segment_length} is not a multiple of hop {self.hop}"
            )
        seg_frames = segment_length // self.hop
        xs, mels = [], []
        for _ in range(batch_size):
            x, mel = self.items[int(rng.integers(len(self.items)))]
            if mel.shape[0] < seg_frames:
                raise ConfigError(
                    f"segment_length {segment_length} exceeds clip length {len(x)}"
                )
            f0 = int(rng.integers(mel.shape[0] - seg_frames + 1))
            xs.append(x[f0 * self.hop : (f0 + seg_frames) * self.hop])
            mels.append(mel[f0 : f0 + seg_frames])
        return np.stack(xs), np.stack(mels)


def latest_checkpoint(checkpoint_dir) -> tuple[int, Path] | None:
    best = None
    for p in Path(checkpoint_dir).glob("step_*.ckpt"):
        try:
            n = int(p.stem.split("_", 1)[1])
        except ValueError:
            continue
        if best is None or n > best[0]:
            best = (n, p)
    return best


def train(dataset: ClipDataset, score_net, spec: SdeSpec, config: TrainingConfig,
          out_dir, resume: bool = False, log=None) -> list:
    """Run the DSM loop; returns the per-step loss history.

    Writes `step_{N}.ckpt` checkpoints and appends tab-separated metrics rows
    (step, loss, learning_rate, wall_ms) to metrics.tsv under out_dir.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    params = score_net.parameters()

    start_step = 0
    if resume:
        found = latest_checkpoint(out_dir)
        if found is not None:
            start_step, path = found
            load_into(params, load_checkpoint(path))
            config.adam.step_count = start_step
            if log:
                log(f"resumed from {path.name} at step {start_step}")

    metrics_path = out_dir / "metrics.tsv"
    mode = "a" if (resume and start_step > 0) else "w"
    losses = []
    with open(metrics_path, mode) as metrics:
        if mode == "w":
            metrics.write("step\tloss\tlearning_rate\twall_ms\n")
        for step in range(start_step + 1, config.max_steps + 1):
            t0 = time.perf_counter()
            rng = step_rng(config.seed, step)
            x0, mel = dataset.sample_batch(config.batch_size, config.segment_length, rng)
            example = make_example(x0, mel, spec, rng, hop=dataset.hop)
            pred = score_net.forward(example.x_t, example.t, np.swapaxes(example.mel, 1, 2))
            loss = dsm_loss(pred, example.target, example.t, spec, config)
            loss_value = loss.item()
            if not np.isfinite(loss_value) or loss_value > DIVERGENCE_LIMIT:
                raise NumericalError(
                    f"training diverged at step {step}: loss {loss_value}"
                )
            loss.backward()
            adam_step(params, config.adam)
            wall_ms = (time.perf_counter() - t0) * 1e3
            metrics.write(
                f"{step}\t{loss_value:.12g}\t{config.adam.learning_rate:g}\t{wall_ms:.3f}\n"
            )
            losses.append(loss_value)
            if step % config.checkpoint_every == 0 or step == config.max_steps:
                save_checkpoint(out_dir / f"step_{step}.ckpt", params)
            if log and (step % 100 == 0 or step == config.max_steps):
                log(f"step {step}/{config.max_steps}  loss {loss_value:.6g}")
    return losses


def esm_validation(score_fn, toy_density, n: int = 20000,
                   rng: np.random.Generator | None = None) -> float:
    """Monte-Carlo explicit score-matching error E||s(x) - grad log p(x)||^2.

    score_fn maps an [n] sample array to an [n] score array; pass
    toy_density.score itself to confirm the zero lower bound.
    """
    rng = rng or np.random.default_rng(0)
    x = toy_density.sample(n, rng)
    err = np.asarray(score_fn(x), dtype=np.float64) - toy_density.score(x)
    return float(np.mean(err**2))
