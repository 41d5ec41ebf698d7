"""DSP feature tests: WAV I/O, STFT, mel filterbank, log-mel, cache files."""

from __future__ import annotations

import math
import pathlib
import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vewave.errors import ConfigError, DataError
from vewave.features import (
    FeatureConfig,
    MelSpectrogram,
    Waveform,
    aligned_frames,
    hz_to_mel,
    load_mel,
    mel_filterbank,
    mel_spectrogram,
    mel_to_hz,
    read_wav,
    stft,
    write_wav,
)

DATA_DIR = pathlib.Path(__file__).parent / "data"


def sine(freq: float, n: int, rate: int = 22050, amp: float = 0.5) -> np.ndarray:
    return amp * np.sin(2 * np.pi * freq * np.arange(n) / rate)


# ---------------------------------------------------------------------------
# config and waveform validation
# ---------------------------------------------------------------------------

class TestFeatureConfig:
    def test_defaults(self):
        cfg = FeatureConfig()
        assert (cfg.sample_rate, cfg.win_length, cfg.hop_length) == (22050, 1024, 256)
        assert (cfg.n_fft, cfg.n_mels) == (1024, 80)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(hop_length=2048),          # hop > win
            dict(win_length=2048),          # win > n_fft
            dict(fmin=9000.0),              # fmin >= fmax
            dict(fmax=12000.0),             # fmax > nyquist
            dict(n_mels=0),
            dict(log_floor=0.0),
        ],
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ConfigError):
            FeatureConfig(**kwargs)

    def test_fingerprint_distinguishes_configs(self):
        a = FeatureConfig()
        b = FeatureConfig(fmax=7999.0)
        assert a.fingerprint() == FeatureConfig().fingerprint()
        assert a.fingerprint() != b.fingerprint()
        assert len(a.fingerprint()) == 16


class TestWaveform:
    def test_validation(self):
        with pytest.raises(DataError):
            Waveform(np.zeros((2, 4)), 22050)
        with pytest.raises(DataError):
            Waveform(np.array([]), 22050)
        with pytest.raises(DataError):
            Waveform(np.array([0.0, np.nan]), 22050)
        with pytest.raises(DataError):
            Waveform(np.array([1.5]), 22050)

    def test_len(self):
        assert len(Waveform(np.zeros(7), 22050)) == 7


# ---------------------------------------------------------------------------
# WAV I/O
# ---------------------------------------------------------------------------

class TestWavIO:
    def test_round_trip_error_within_one_lsb(self, tmp_path):
        w = Waveform(sine(1000.0, 2205), 22050)
        path = tmp_path / "sine.wav"
        write_wav(path, w)
        back = read_wav(path)
        assert back.sample_rate == 22050
        assert len(back) == len(w)
        assert np.max(np.abs(back.samples - w.samples)) <= 2.0**-15

    def test_zero_length_rejected(self, tmp_path):
        path = tmp_path / "empty.wav"
        with wave.open(str(path), "wb") as f:
            f.setnchannels(1)
            f.setsampwidth(2)
            f.setframerate(22050)
        with pytest.raises(DataError):
            read_wav(path)

    def test_stereo_opposite_channels_average_to_zero(self, tmp_path):
        path = tmp_path / "stereo.wav"
        left = np.full(100, 0.5)
        interleaved = np.empty(200)
        interleaved[0::2] = left
        interleaved[1::2] = -left
        q = np.rint(interleaved * 32768.0).astype("<i2")
        with wave.open(str(path), "wb") as f:
            f.setnchannels(2)
            f.setsampwidth(2)
            f.setframerate(22050)
            f.writeframes(q.tobytes())
        back = read_wav(path)
        assert len(back) == 100
        assert np.all(back.samples == 0.0)

    def test_unsupported_width_rejected(self, tmp_path):
        path = tmp_path / "wide.wav"
        with wave.open(str(path), "wb") as f:
            f.setnchannels(1)
            f.setsampwidth(4)
            f.setframerate(22050)
            f.writeframes(b"\x00" * 400)
        with pytest.raises(DataError) as exc:
            read_wav(path)
        assert "16-bit" in str(exc.value)

    def test_garbage_file_rejected(self, tmp_path):
        path = tmp_path / "junk.wav"
        path.write_bytes(b"not audio at all")
        with pytest.raises(DataError):
            read_wav(path)

    def test_write_clips_out_of_range_rounding(self, tmp_path):
        # +1.0 maps above the int16 max and must clip, not wrap
        w = Waveform(np.array([1.0, -1.0, 0.0]), 22050)
        path = tmp_path / "edge.wav"
        write_wav(path, w)
        back = read_wav(path)
        assert back.samples[0] == pytest.approx(32767 / 32768.0)
        assert back.samples[1] == -1.0
        assert back.samples[2] == 0.0


# ---------------------------------------------------------------------------
# STFT
# ---------------------------------------------------------------------------

class TestStft:
    def test_one_second_makes_87_frames(self):
        cfg = FeatureConfig()
        spec = stft(Waveform(sine(440.0, 22050), 22050), cfg)
        assert spec.shape == (87, 513)
        assert spec.dtype == np.complex128

    def test_frame_count_formula(self):
        cfg = FeatureConfig()
        for n in (1, 255, 256, 257, 1024, 5000):
            spec = stft(Waveform(np.zeros(n) + 1e-6, 22050), cfg)
            assert spec.shape[0] == n // cfg.hop_length + 1

    def test_pure_tone_peaks_at_expected_bin(self):
        cfg = FeatureConfig()
        spec = stft(Waveform(sine(1000.0, 22050), 22050), cfg)
        mid = np.abs(spec[40])  # an interior frame
        assert int(np.argmax(mid)) == round(1000 * 1024 / 22050)  # = 46

    def test_parseval_per_frame(self):
        # total spectral energy reconstructed from the one-sided DFT equals
        # n_fft times the windowed-frame energy
        cfg = FeatureConfig()
        rng = np.random.default_rng(5)
        w = Waveform(np.clip(rng.standard_normal(4096) * 0.2, -1, 1), 22050)
        spec = stft(w, cfg)

        # rebuild the windowed frames exactly as the transform sees them
        from vewave.features import _hann, _reflect_pad

        pad = cfg.n_fft // 2
        padded = _reflect_pad(w.samples, pad)
        window = _hann(cfg.win_length)
        for f in range(spec.shape[0]):
            frame = padded[f * cfg.hop_length : f * cfg.hop_length + cfg.n_fft].copy()
            frame[: cfg.win_length] *= window
            energy_time = np.sum(frame**2)
            mags = np.abs(spec[f]) ** 2
            energy_freq = mags[0] + mags[-1] + 2.0 * np.sum(mags[1:-1])
            assert energy_freq == pytest.approx(cfg.n_fft * energy_time, rel=1e-6)


# ---------------------------------------------------------------------------
# mel scale and filterbank
# ---------------------------------------------------------------------------

class TestMelFilterbank:
    def test_mel_of_700hz(self):
        assert hz_to_mel(700.0) == pytest.approx(2595.0 * math.log10(2.0), rel=1e-12)
        assert hz_to_mel(700.0) == pytest.approx(781.17, abs=0.01)

    def test_mel_hz_round_trip(self):
        f = np.array([0.0, 123.4, 700.0, 8000.0])
        np.testing.assert_allclose(mel_to_hz(hz_to_mel(f)), f, rtol=1e-12, atol=1e-9)

    def test_shape_and_nonnegativity(self):
        fb = mel_filterbank(FeatureConfig())
        assert fb.shape == (80, 513)
        assert np.all(fb >= 0.0)

    def test_filters_are_unimodal_with_unit_peak(self):
        # peak-normalized triangles sampled at bin centers: the sampled max
        # is at most 1 (exactly 1 whenever a bin lands on the apex)
        fb = mel_filterbank(FeatureConfig())
        assert fb.max() <= 1.0 + 1e-12
        assert fb.max() > 0.95  # wide filters sample close to the apex
        for row in fb:
            assert row.max() > 0.5  # peak-normalized, not area-normalized
            support = np.nonzero(row)[0]
            assert np.array_equal(support, np.arange(support[0], support[-1] + 1))
            peak = int(np.argmax(row))
            # nondecreasing up to the peak, nonincreasing after
            assert np.all(np.diff(row[support[0] : peak + 1]) >= -1e-12)
            assert np.all(np.diff(row[peak : support[-1] + 1]) <= 1e-12)

    def test_band_coverage(self):
        cfg = FeatureConfig()
        fb = mel_filterbank(cfg)
        freqs = np.arange(513) * cfg.sample_rate / cfg.n_fft
        inside = (freqs > cfg.fmin) & (freqs < cfg.fmax)
        # every analysis bin strictly inside (fmin, fmax) is seen by a filter
        assert np.all(fb.sum(axis=0)[inside] > 0.0)

    def test_too_many_mels_for_resolution_rejected(self):
        with pytest.raises(ConfigError):
            mel_filterbank(FeatureConfig(n_mels=400))


# ---------------------------------------------------------------------------
# log-mel spectrogram
# ---------------------------------------------------------------------------

class TestMelSpectrogram:
    def test_silence_hits_log_floor(self):
        cfg = FeatureConfig()
        mel = mel_spectrogram(Waveform(np.zeros(2048), 22050), cfg)
        assert np.all(mel.frames == math.log(cfg.log_floor))

    def test_sample_rate_mismatch_rejected(self):
        with pytest.raises(DataError):
            mel_spectrogram(Waveform(np.zeros(2048), 16000), FeatureConfig())

    def test_amplitude_scaling_shifts_log_mel(self):
        cfg = FeatureConfig()
        x = sine(1500.0, 4096, amp=0.8)
        loud = mel_spectrogram(Waveform(x, 22050), cfg).frames
        soft = mel_spectrogram(Waveform(x / 4.0, 22050), cfg).frames
        floor = math.log(cfg.log_floor)
        above = (loud > floor + 4.0) & (soft > floor)  # clear of the floor
        assert np.count_nonzero(above) > 100
        shift = loud[above] - soft[above]
        np.testing.assert_allclose(shift, 2.0 * math.log(4.0), atol=1e-9)

    def test_deterministic_bit_identical(self):
        cfg = FeatureConfig()
        x = sine(777.0, 5000, amp=0.3)
        a = mel_spectrogram(Waveform(x, 22050), cfg).frames
        b = mel_spectrogram(Waveform(x, 22050), cfg).frames
        assert np.array_equal(a, b)

    def test_golden_chirp(self):
        golden = np.load(DATA_DIR / "golden_chirp_mel.npy")
        import sys

        sys.path.insert(0, str(DATA_DIR))
        try:
            from gen_golden_chirp import chirp_4096
        finally:
            sys.path.pop(0)
        mel = mel_spectrogram(Waveform(chirp_4096(), 22050), FeatureConfig())
        assert mel.frames.shape == golden.shape == (17, 80)
        assert np.max(np.abs(mel.frames - golden)) < 1e-8

    def test_frames_cover_signal(self):
        cfg = FeatureConfig()
        for n in (300, 4096, 10000):
            mel = mel_spectrogram(Waveform(np.zeros(n) + 1e-4, 22050), cfg)
            assert mel.n_frames * cfg.hop_length >= n

    def test_carries_config_fingerprint(self):
        cfg = FeatureConfig()
        mel = mel_spectrogram(Waveform(np.zeros(1000), 22050), cfg)
        assert mel.config_fingerprint == cfg.fingerprint()


class TestAlignment:
    @settings(max_examples=30, deadline=None)
    @given(frames=st.integers(min_value=1, max_value=40))
    def test_hop_multiple_crops_align_exactly(self, frames):
        cfg = FeatureConfig()
        n = frames * cfg.hop_length
        rng = np.random.default_rng(frames)
        w = Waveform(np.clip(rng.standard_normal(n) * 0.1, -1, 1), 22050)
        mel = mel_spectrogram(w, cfg)
        aligned = aligned_frames(mel, n, cfg.hop_length)
        assert aligned.shape[0] * cfg.hop_length == n

    def test_non_multiple_rejected(self):
        from vewave.errors import DomainError

        cfg = FeatureConfig()
        mel = mel_spectrogram(Waveform(np.zeros(1024), 22050), cfg)
        with pytest.raises(DomainError):
            aligned_frames(mel, 1000, cfg.hop_length)
        with pytest.raises(DataError):
            aligned_frames(mel, 4096, cfg.hop_length)  # more than mel covers


# ---------------------------------------------------------------------------
# mel cache files
# ---------------------------------------------------------------------------

class TestMelCache:
    def test_round_trip(self, tmp_path, rng):
        cfg = FeatureConfig()
        mel = MelSpectrogram(rng.standard_normal((12, 80)), cfg.fingerprint())
        path = tmp_path / "clip.mel"
        from vewave.features import save_mel

        save_mel(path, mel)
        back = load_mel(path, cfg)
        assert np.array_equal(back.frames, mel.frames)
        assert back.config_fingerprint == cfg.fingerprint()

    def test_fingerprint_mismatch_rejected(self, tmp_path, rng):
        from vewave.features import save_mel

        cfg = FeatureConfig()
        other = FeatureConfig(fmax=6000.0)
        mel = MelSpectrogram(rng.standard_normal((5, 80)), other.fingerprint())
        path = tmp_path / "clip.mel"
        save_mel(path, mel)
        with pytest.raises(DataError) as exc:
            load_mel(path, cfg)
        assert "fingerprint" in str(exc.value).lower()
        # loading without a config skips the check
        assert load_mel(path).n_frames == 5

    def test_corrupt_file_rejected(self, tmp_path):
        path = tmp_path / "bad.mel"
        path.write_bytes(b"VWML" + b"\x01" * 10)
        with pytest.raises(DataError):
            load_mel(path)
