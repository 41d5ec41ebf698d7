"""Conditional score estimator: a dilated-residual conv stack over the noisy
waveform, conditioned on an upsampled mel spectrogram and a diffusion-time
embedding, with a skip-sum output head.

Layout per block: the time embedding (projected per block) is broadcast-added
to the incoming state, a dilated conv widens to 2C channels, a 1x1 projection
of the shared upsampled mel is added pre-gate, a tanh (x) sigmoid gate narrows
back to C, and a final 1x1 conv splits into a residual (added to the state and
rescaled by 1/sqrt(2)) and a skip output.

The raw network output is divided by the transition std sqrt(V(t)) so the
learned function stays O(1) across noise scales while the returned value is a
proper score estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DomainError, ShapeError
from .nn import Conv1d, ConvTranspose1d, Linear
from .sde import SdeSpec, VeSde

# Multiplier applied to t before the sinusoid: t lives in [0, 1], so this
# spreads the encoding over [0, 64] radians at the base frequency while
# keeping the embedding 1e-4-Lipschitz-scale smooth in t.
TIME_SCALE = 64.0


@dataclass(frozen=True)
class ScoreNetConfig:
    residual_layers: int = 30
    residual_channels: int = 64
    skip_channels: int = 64
    dilation_cycle: int = 10
    kernel_size: int = 3
    mel_bins: int = 80
    upsample_strides: tuple = (16, 16)
    time_embed_dim: int = 128

    def __post_init__(self):
        for field in (
            "residual_layers",
            "residual_channels",
            "skip_channels",
            "dilation_cycle",
            "kernel_size",
            "mel_bins",
            "time_embed_dim",
        ):
            v = getattr(self, field)
            if not isinstance(v, (int, np.integer)) or v <= 0:
                raise ConfigError(f"{field} must be a positive integer, got {v!r}")
        if self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.time_embed_dim % 2 != 0 or self.time_embed_dim < 4:
            raise ConfigError(
                f"time_embed_dim must be an even integer >= 4, got {self.time_embed_dim}"
            )
        strides = tuple(int(s) for s in self.upsample_strides)
        if len(strides) != 2 or any(s < 1 for s in strides):
            raise ConfigError(
                f"upsample_strides must be a pair of positive integers, got {self.upsample_strides!r}"
            )
        object.__setattr__(self, "upsample_strides", strides)

    @property
    def hop(self) -> int:
        """Samples per mel frame the upsampler produces (stride product)."""
        return int(np.prod(self.upsample_strides))

    def dilation(self, i: int) -> int:
        return 2 ** (i % self.dilation_cycle)

    @classmethod
    def desk(cls, **overrides):
        """Small configuration for CI-speed tests and desk-scale training."""
        kw = dict(residual_layers=8, residual_channels=32, dilation_cycle=4)
        kw.update(overrides)
        return cls(**kw)


def time_encoding(t, dim: int, t_max: float = 1.0) -> np.ndarray:
    """Pre-MLP sinusoidal encoding of diffusion time, shape [B, dim].

    Interleaved (sin, cos) pairs of TIME_SCALE*t over dim/2 geometrically
    spaced frequencies; at t=0 this is [0, 1, 0, 1, ...].
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if t.ndim != 1:
        raise ShapeError(f"t must be scalar or 1-D, got shape {t.shape}")
    if np.any(t < 0.0) or np.any(t > t_max * (1 + 1e-12)):
        raise DomainError(f"t must lie in [0, {t_max}], got range [{t.min()}, {t.max()}]")
    half = dim // 2
    freqs = 10000.0 ** (-np.arange(half) / (half - 1))
    phase = TIME_SCALE * t[:, None] * freqs[None, :]
    enc = np.empty((t.shape[0], dim))
    enc[:, 0::2] = np.sin(phase)
    enc[:, 1::2] = np.cos(phase)
    return enc


class ResidualBlock:
    def __init__(self, config: ScoreNetConfig, dilation: int, rng, name: str,
                 zero_init_out: bool = False):
        c = config.residual_channels
        self.dilation = dilation
        self.dilated = Conv1d(
            c, 2 * c, config.kernel_size, rng, dilation=dilation,
            padding="same", name=f"{name}.dilated",
        )
        self.cond = Conv1d(config.mel_bins, 2 * c, 1, rng, name=f"{name}.cond")
        self.time = Linear(config.time_embed_dim, c, rng, name=f"{name}.time")
        self.out = Conv1d(
            c, c + config.skip_channels, 1, rng,
            zero_init=zero_init_out, name=f"{name}.out",
        )
        self._c = c

    def __call__(self, state: Tensor, time_vec: Tensor, mel_cond: Tensor,
                 cond_precomputed: bool = False):
        """-> (next_state, skip).

        mel_cond is the shared upsampled mel [B, mel_bins, L], or — when
        cond_precomputed — this block's own 1x1 projection of it [B, 2C, L].
        """
        c = self._c
        if state.shape[2] != mel_cond.shape[2]:
            raise ShapeError(
                f"state length {state.shape[2]} != mel condition length {mel_cond.shape[2]}"
            )
        t_bias = ad.reshape(self.time(time_vec), (state.shape[0], c, 1))
        y = self.dilated(state + t_bias)
        cond = mel_cond if cond_precomputed else self.cond(mel_cond)
        y = y + cond
        gated = ad.mul(ad.tanh(ad.narrow(y, 1, 0, c)), ad.sigmoid(ad.narrow(y, 1, c, c)))
        out = self.out(gated)
        residual = ad.narrow(out, 1, 0, c)
        skip = ad.narrow(out, 1, c, out.shape[1] - c)
        next_state = ad.scale(state + residual, 1.0 / math.sqrt(2.0))
        return next_state, skip

    def parameters(self):
        return (
            self.dilated.parameters()
            + self.cond.parameters()
            + self.time.parameters()
            + self.out.parameters()
        )


class ScoreNet:
    """Full conditional score model.

    forward() keeps the autodiff graph for training; score() is a
    gradient-free fast path for the sampler that reuses a conditioner cache
    (the mel upsampling and all per-block 1x1 mel projections are independent
    of x and t, so they are computed once per clip).
    """

    def __init__(self, config: ScoreNetConfig, sde_spec: SdeSpec, rng):
        self.config = config
        self.sde = VeSde(sde_spec)
        c = config.residual_channels

        self.input = Conv1d(1, c, 1, rng, name="input")
        self.t_fc1 = Linear(config.time_embed_dim, config.time_embed_dim, rng, name="t_fc1")
        self.t_fc2 = Linear(config.time_embed_dim, config.time_embed_dim, rng, name="t_fc2")
        s1, s2 = config.upsample_strides
        self.up1 = ConvTranspose1d(config.mel_bins, config.mel_bins, 2 * s1, rng,
                                   stride=s1, name="up1")
        self.up2 = ConvTranspose1d(config.mel_bins, config.mel_bins, 2 * s2, rng,
                                   stride=s2, name="up2")
        self.blocks = [
            ResidualBlock(config, config.dilation(i), rng, name=f"block{i:02d}")
            for i in range(config.residual_layers)
        ]
        self.head1 = Conv1d(config.skip_channels, config.skip_channels, 1, rng, name="head1")
        self.head2 = Conv1d(config.skip_channels, 1, 1, rng, zero_init=True, name="head2")

    # ---- parameters ----------------------------------------------------

    def parameters(self):
        params = (
            self.input.parameters()
            + self.t_fc1.parameters()
            + self.t_fc2.parameters()
            + self.up1.parameters()
            + self.up2.parameters()
        )
        for b in self.blocks:
            params += b.parameters()
        return params + self.head1.parameters() + self.head2.parameters()

    # ---- conditioning branches -----------------------------------------

    def embed_time(self, t) -> Tensor:
        """Sinusoidal encoding of t passed through the two-layer MLP, [B, D]."""
        enc = Tensor(time_encoding(t, self.config.time_embed_dim, self.sde.spec.t_max))
        return ad.silu(self.t_fc2(ad.silu(self.t_fc1(enc))))

    def upsample_mel(self, mel) -> Tensor:
        """[B, mel_bins, F] -> [B, mel_bins, F*hop], center-trimmed per layer."""
        mel = mel if isinstance(mel, Tensor) else Tensor(np.asarray(mel, dtype=np.float64))
        if mel.data.ndim != 3 or mel.shape[1] != self.config.mel_bins:
            raise ShapeError(
                f"mel must be [B, {self.config.mel_bins}, F], got shape {tuple(mel.shape)}"
            )
        y = mel
        for layer in (self.up1, self.up2):
            stride = layer.stride
            kernel = layer.weight.shape[2]
            target = y.shape[2] * stride
            y = ad.leaky_relu(layer(y))
            y = ad.narrow(y, 2, (kernel - stride) // 2, target)
        return y

    # ---- full forward (training path, keeps the graph) ------------------

    def forward(self, x, t, mel) -> Tensor:
        """x: [B, L] waveform at noise level t; mel: [B, mel_bins, F].

        Returns the score estimate, shape [B, L].  Requires F*hop >= L; the
        upsampled conditioner is trimmed to L.
        """
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
        if x.data.ndim != 2:
            raise ShapeError(f"x must be [B, L], got shape {tuple(x.shape)}")
        b, length = x.shape
        mel_up = self.upsample_mel(mel)
        if mel_up.shape[0] != b:
            raise ShapeError(f"batch mismatch: x has {b}, mel has {mel_up.shape[0]}")
        if mel_up.shape[2] < length:
            raise ShapeError(
                f"upsampled mel length {mel_up.shape[2]} < waveform length {length}"
            )
        if mel_up.shape[2] > length:
            mel_up = ad.narrow(mel_up, 2, 0, length)
        time_vec = self.embed_time(t)
        if time_vec.shape[0] == 1 and b > 1:
            time_vec = ad.add(time_vec, Tensor(np.zeros((b, 1))))
        raw = self._run_stack(x, time_vec, [mel_up] * len(self.blocks), cond_precomputed=False)
        return self._scale_output(raw, t)

    def _run_stack(self, x: Tensor, time_vec: Tensor, conds, cond_precomputed: bool) -> Tensor:
        b, length = x.shape
        state = ad.relu(self.input(ad.reshape(x, (b, 1, length))))
        skip_sum = None
        for block, cond in zip(self.blocks, conds):
            state, skip = block(state, time_vec, cond, cond_precomputed=cond_precomputed)
            skip_sum = skip if skip_sum is None else skip_sum + skip
        h = ad.scale(skip_sum, 1.0 / math.sqrt(len(self.blocks)))
        h = self.head2(ad.relu(self.head1(ad.relu(h))))
        return ad.reshape(h, (b, length))

    def _scale_output(self, raw: Tensor, t) -> Tensor:
        """Divide the raw net output by the transition std at t."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
        if t_arr.shape[0] not in (1, raw.shape[0]):
            raise ShapeError(
                f"t has {t_arr.shape[0]} entries for a batch of {raw.shape[0]}"
            )
        if np.any(t_arr < self.sde.spec.t_min):
            raise DomainError(
                f"score evaluation requires t >= t_min={self.sde.spec.t_min}, got {t_arr.min()}"
            )
        std = np.sqrt(np.atleast_1d(self.sde.transition_moments(t_arr).variance))
        return ad.mul(raw, Tensor((1.0 / std)[:, None]))

    # ---- sampler fast path ----------------------------------------------

    def prepare_conditioner(self, mel, length: int):
        """Precompute per-block mel conditions for repeated score() calls.

        mel: [B, mel_bins, F].  Returns an opaque cache (list of [B, 2C, L]
        arrays) valid for waveforms of exactly `length` samples.
        """
        with ad.no_grad():
            mel_up = self.upsample_mel(np.asarray(mel, dtype=np.float64))
            if mel_up.shape[2] < length:
                raise ShapeError(
                    f"upsampled mel length {mel_up.shape[2]} < waveform length {length}"
                )
            if mel_up.shape[2] > length:
                mel_up = ad.narrow(mel_up, 2, 0, length)
            return [block.cond(mel_up).data for block in self.blocks]

    def score(self, x: np.ndarray, t: float, conditioner) -> np.ndarray:
        """Gradient-free score estimate for the sampler: x [B, L] -> [B, L]."""
        with ad.no_grad():
            time_vec = self.embed_time(t)
            if time_vec.shape[0] == 1 and x.shape[0] > 1:
                time_vec = Tensor(np.broadcast_to(time_vec.data, (x.shape[0], time_vec.shape[1])).copy())
            conds = [Tensor(c) for c in conditioner]
            raw = self._run_stack(Tensor(np.asarray(x, dtype=np.float64)), time_vec,
                                  conds, cond_precomputed=True)
            return self._scale_output(raw, t).data


# ---- receptive-field bookkeeping ----------------------------------------


def stack_receptive_field(config: ScoreNetConfig) -> int:
    """Half-width (samples) of the residual stack's receptive field."""
    return sum(config.dilation(i) * (config.kernel_size - 1) // 2
               for i in range(config.residual_layers))


def mel_influence_interval(config: ScoreNetConfig, frame: int):
    """Inclusive sample-index interval a single mel frame can influence.

    Tracks the frame index through each transposed-conv layer (output index
    j = i*stride + k - trim for tap k), then widens by the conv stack's
    receptive field.
    """
    lo = hi = frame
    for s in config.upsample_strides:
        k = 2 * s
        off = (k - s) // 2
        lo = lo * s - off
        hi = hi * s + (k - 1) - off
    r = stack_receptive_field(config)
    return lo - r, hi + r
