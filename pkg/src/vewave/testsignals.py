"""Deterministic speech-like test clips (no dataset needed).

A pitch-glided harmonic stack with two formant-ish resonance peaks, a
syllabic amplitude envelope, and one breathy noise burst — enough spectral
and temporal structure to exercise the mel conditioning path, generated
reproducibly from a seed.
"""

from __future__ import annotations

import numpy as np

from .features import Waveform


def speech_like_clip(duration: float = 1.0, sample_rate: int = 22050,
                     seed: int = 0) -> Waveform:
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate

    # fundamental gliding 110 -> 180 Hz with slight vibrato
    f0 = 110.0 + 70.0 * t / max(t[-1], 1e-9) + 3.0 * np.sin(2 * np.pi * 5.0 * t)
    phase0 = 2 * np.pi * np.cumsum(f0) / sample_rate

    # harmonic stack shaped by two resonances (crude formants)
    def resonance_weight(freq_hz, center, width):
        return 1.0 / (1.0 + ((freq_hz - center) / width) ** 2)

    voiced = np.zeros(n)
    for h in range(1, 18):
        freq = h * f0
        w = (resonance_weight(freq, 700.0, 250.0)
             + 0.7 * resonance_weight(freq, 1800.0, 350.0)) / h
        voiced += w * np.sin(h * phase0 + rng.uniform(0, 2 * np.pi))

    # syllabic gating: ~3 Hz raised-cosine envelope, never fully silent
    envelope = 0.15 + 0.85 * (0.5 - 0.5 * np.cos(2 * np.pi * 3.0 * t)) ** 1.5

    # one breathy burst in the middle third (high-passed noise)
    noise = rng.standard_normal(n)
    noise = np.diff(noise, prepend=noise[0])
    burst = np.exp(-0.5 * ((t - 0.55 * duration) / (0.04 * duration)) ** 2)
    x = voiced * envelope + 0.35 * noise * burst

    x *= 0.95 / np.max(np.abs(x))
    return Waveform(samples=x, sample_rate=sample_rate)
