"""Waveform I/O and log-mel conditioning features.

Fixed DSP surface: 16-bit PCM WAV in and out, centered Hann STFT with reflect
padding, an 80-band triangular mel filterbank on mel(f) = 2595*log10(1+f/700),
natural-log compression with a fixed floor.  No resampling: inputs must
already be at the configured rate.

Every mel matrix carries a fingerprint of the FeatureConfig that produced it
so a train/sample configuration mismatch is an error instead of quiet noise.
"""

from __future__ import annotations

import hashlib
import math
import struct
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DomainError

MEL_MAGIC = b"VWML"
MEL_VERSION = 1


@dataclass(frozen=True)
class FeatureConfig:
    sample_rate: int = 22050
    win_length: int = 1024
    hop_length: int = 256
    n_fft: int = 1024
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-5

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        if not (0 < self.hop_length <= self.win_length <= self.n_fft):
            raise ConfigError(
                "need 0 < hop_length <= win_length <= n_fft, got "
                f"hop={self.hop_length}, win={self.win_length}, n_fft={self.n_fft}"
            )
        if not (0 <= self.fmin < self.fmax <= self.sample_rate / 2):
            raise ConfigError(
                f"need 0 <= fmin < fmax <= sample_rate/2, got fmin={self.fmin}, "
                f"fmax={self.fmax}, nyquist={self.sample_rate / 2}"
            )
        if self.n_mels <= 0:
            raise ConfigError(f"n_mels must be positive, got {self.n_mels}")
        if self.log_floor <= 0:
            raise ConfigError(f"log_floor must be positive, got {self.log_floor}")

    def fingerprint(self) -> str:
        """Stable short hash of every field that affects mel output."""
        canon = (
            f"sr={self.sample_rate};win={self.win_length};hop={self.hop_length};"
            f"nfft={self.n_fft};nmels={self.n_mels};fmin={self.fmin!r};"
            f"fmax={self.fmax!r};floor={self.log_floor!r}"
        )
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise DataError(f"waveform must be 1-D, got shape {self.samples.shape}")
        if self.samples.size == 0:
            raise DataError("empty waveform")
        if not np.all(np.isfinite(self.samples)):
            raise DataError("waveform contains non-finite samples")
        peak = float(np.max(np.abs(self.samples)))
        if peak > 1.0 + 1e-9:
            raise DataError(f"waveform exceeds [-1, 1] (peak {peak:.6g}); normalize first")

    def __len__(self):
        return self.samples.size


@dataclass
class MelSpectrogram:
    frames: np.ndarray  # [n_frames, n_mels]
    config_fingerprint: str

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_mels(self) -> int:
        return self.frames.shape[1]


# ---- WAV I/O --------------------------------------------------------------

_PCM_SCALE = 32768.0


def read_wav(path) -> Waveform:
    """Read a 16-bit PCM WAV; stereo is downmixed by channel averaging."""
    try:
        with wave.open(str(path), "rb") as f:
            n_channels = f.getnchannels()
            width = f.getsampwidth()
            rate = f.getframerate()
            n = f.getnframes()
            raw = f.readframes(n)
    except (wave.Error, EOFError) as e:
        raise DataError(f"{path}: not a readable WAV file ({e})") from e
    if width != 2:
        raise DataError(f"{path}: only 16-bit PCM supported, got {8 * width}-bit")
    if n == 0:
        raise DataError(f"{path}: zero-length audio")
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / _PCM_SCALE
    if n_channels > 1:
        data = data.reshape(-1, n_channels).mean(axis=1)
    return Waveform(samples=data, sample_rate=rate)


def write_wav(path, waveform: Waveform) -> None:
    """Write mono 16-bit PCM; symmetric scale, round-trip error <= 2**-15."""
    x = waveform.samples
    q = np.clip(np.rint(x * _PCM_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(waveform.sample_rate)
        f.writeframes(q.tobytes())


# ---- STFT / mel -------------------------------------------------------------


def _hann(n: int) -> np.ndarray:
    # periodic Hann window (DFT-even), the analysis convention throughout
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _reflect_pad(x: np.ndarray, pad: int) -> np.ndarray:
    """Reflect-pad that tolerates pad >= len(x) by repeated reflection."""
    if pad == 0:
        return x
    if x.size == 1:
        return np.full(x.size + 2 * pad, x[0])
    out = x
    while pad > 0:
        step = min(pad, out.size - 1)
        out = np.pad(out, step, mode="reflect")
        pad -= step
    return out


def stft(waveform: Waveform, config: FeatureConfig) -> np.ndarray:
    """Centered Hann STFT -> complex [n_frames, n_fft//2 + 1].

    Frame count is floor(len/hop) + 1; frame i is centered on sample i*hop.
    """
    x = waveform.samples
    win = config.win_length
    hop = config.hop_length
    n_fft = config.n_fft
    n_frames = x.size // hop + 1
    padded = _reflect_pad(x, win // 2)
    window = _hann(win)
    frames = np.empty((n_frames, win))
    for i in range(n_frames):
        frames[i] = padded[i * hop : i * hop + win]
    frames *= window
    if n_fft > win:
        frames = np.pad(frames, ((0, 0), (0, n_fft - win)))
    return np.fft.rfft(frames, n=n_fft, axis=1)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(config: FeatureConfig) -> np.ndarray:
    """Triangular filters equally spaced in mel -> [n_mels, n_fft//2 + 1]."""
    n_bins = config.n_fft // 2 + 1
    bin_hz = np.arange(n_bins) * config.sample_rate / config.n_fft
    mel_pts = np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.fmax), config.n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    fb = np.zeros((config.n_mels, n_bins))
    for m in range(config.n_mels):
        lo, center, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        rising = (bin_hz - lo) / (center - lo)
        falling = (hi - bin_hz) / (hi - center)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
        if not np.any(fb[m] > 0):
            raise ConfigError(
                f"mel filter {m} is empty: n_mels={config.n_mels} too large for "
                f"n_fft={config.n_fft} at sample_rate={config.sample_rate}"
            )
    return fb


def mel_spectrogram(waveform: Waveform, config: FeatureConfig) -> MelSpectrogram:
    """log(max(filterbank @ |STFT|^2, log_floor)), natural log."""
    if waveform.sample_rate != config.sample_rate:
        raise DataError(
            f"sample rate {waveform.sample_rate} != configured {config.sample_rate}; "
            "resampling is not performed"
        )
    spec = stft(waveform, config)
    power = np.abs(spec) ** 2
    energies = power @ mel_filterbank(config).T
    frames = np.log(np.maximum(energies, config.log_floor))
    return MelSpectrogram(frames=frames, config_fingerprint=config.fingerprint())


def aligned_frames(mel: MelSpectrogram, n_samples: int, hop: int) -> np.ndarray:
    """Training alignment: exactly n_samples/hop frames (final frame dropped).

    The centered STFT yields floor(len/hop)+1 frames; cropping waveforms to a
    hop multiple and dropping the final frame gives frames*hop == n_samples.
    """
    if n_samples % hop != 0:
        raise DomainError(f"length {n_samples} is not a multiple of hop {hop}")
    need = n_samples // hop
    if mel.n_frames < need:
        raise DataError(f"mel has {mel.n_frames} frames, need {need}")
    return mel.frames[:need]


# ---- mel cache --------------------------------------------------------------


def save_mel(path, mel: MelSpectrogram) -> None:
    fp = mel.config_fingerprint.encode("ascii")
    arr = np.ascontiguousarray(mel.frames, dtype="<f8")
    with open(path, "wb") as f:
        f.write(MEL_MAGIC)
        f.write(struct.pack("<II", MEL_VERSION, len(fp)))
        f.write(fp)
        f.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        f.write(arr.tobytes())


def load_mel(path, config: FeatureConfig | None = None) -> MelSpectrogram:
    """Load a cached mel; verifies the fingerprint when a config is given."""
    blob = Path(path).read_bytes()
    if blob[:4] != MEL_MAGIC:
        raise DataError(f"{path}: not a mel cache file")
    version, fp_len = struct.unpack_from("<II", blob, 4)
    if version != MEL_VERSION:
        raise DataError(f"{path}: unsupported mel cache version {version}")
    off = 12
    fp = blob[off : off + fp_len].decode("ascii")
    off += fp_len
    n_frames, n_mels = struct.unpack_from("<II", blob, off)
    off += 8
    frames = np.frombuffer(blob, dtype="<f8", count=n_frames * n_mels, offset=off)
    frames = frames.reshape(n_frames, n_mels).astype(np.float64)
    if config is not None and fp != config.fingerprint():
        raise DataError(
            f"{path}: mel cache fingerprint {fp} does not match the active "
            f"feature configuration {config.fingerprint()}; re-extract features"
        )
    return MelSpectrogram(frames=frames, config_fingerprint=fp)
