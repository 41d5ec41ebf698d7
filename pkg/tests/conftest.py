"""Shared fixtures and finite-difference helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from vewave.autodiff import Tensor
from vewave.sde import SdeSpec


# ---------------------------------------------------------------------------
# Finite-difference machinery
# ---------------------------------------------------------------------------

def central_diff(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Dense central-difference gradient of scalar f at x (small arrays only)."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        fp = f(x)
        flat[i] = keep - h
        fm = f(x)
        flat[i] = keep
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def rel_err(approx: np.ndarray, exact: np.ndarray) -> float:
    """Worst-case relative error with an absolute floor for near-zero entries."""
    approx = np.asarray(approx, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    denom = np.maximum(np.abs(exact), 1e-8)
    return float(np.max(np.abs(approx - exact) / denom))


def check_grads_sampled(
    loss_fn,
    tensors: list[Tensor],
    rng: np.random.Generator,
    n_coords: int = 6,
    h: float = 1e-6,
    rel_tol: float = 1e-5,
) -> float:
    """Compare backprop gradients of loss_fn() against central differences.

    Probes n_coords random coordinates per tensor instead of the full dense
    Jacobian so the check scales to real layer sizes.  Returns the worst
    relative error seen (and asserts it is within rel_tol).
    """
    loss = loss_fn()
    loss.backward()
    worst = 0.0
    for tensor in tensors:
        assert tensor.grad is not None, "missing gradient after backward"
        analytic = tensor.grad
        flat = tensor.data.reshape(-1)
        gflat = analytic.reshape(-1)
        size = flat.size
        coords = rng.choice(size, size=min(n_coords, size), replace=False)
        for i in coords:
            keep = flat[i]
            flat[i] = keep + h
            fp = float(loss_fn().data)
            flat[i] = keep - h
            fm = float(loss_fn().data)
            flat[i] = keep
            fd = (fp - fm) / (2.0 * h)
            denom = max(abs(fd), abs(gflat[i]), 1e-7)
            err = abs(fd - gflat[i]) / denom
            worst = max(worst, err)
            assert err <= rel_tol, (
                f"gradient mismatch at coord {i}: analytic={gflat[i]:.6e} "
                f"fd={fd:.6e} rel_err={err:.2e}"
            )
    return worst


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------

@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture
def paper_spec() -> SdeSpec:
    return SdeSpec.paper()


@pytest.fixture
def wide_spec() -> SdeSpec:
    return SdeSpec.wide()


@pytest.fixture
def tiny_model_config():
    from vewave.scorenet import ScoreNetConfig

    return ScoreNetConfig(
        residual_layers=2,
        residual_channels=4,
        skip_channels=4,
        dilation_cycle=2,
        kernel_size=3,
        upsample_strides=(4, 4),
        time_embed_dim=8,
        mel_bins=6,
    )


# ---------------------------------------------------------------------------
# Acceptance-criteria reporting
# ---------------------------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo one pass/fail line per acceptance criterion after the test run."""
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def criterion():
    """Record and assert a single acceptance-criterion outcome."""

    def report(cid: str, detail: str, passed: bool) -> None:
        line = f"[{cid}] {detail} -> {'pass' if passed else 'FAIL'}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert passed, line

    return report


# ---------------------------------------------------------------------------
# Desk-scale single-clip overfit run (shared by the training-module example
# test and the acceptance criterion; ~25 minutes, so it runs exactly once)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def desk_overfit_run(tmp_path_factory):
    from vewave.features import FeatureConfig, Waveform, aligned_frames, mel_spectrogram
    from vewave.sampler import SamplerConfig, generate
    from vewave.scorenet import ScoreNet, ScoreNetConfig
    from vewave.testsignals import speech_like_clip
    from vewave.training import ClipDataset, TrainingConfig, train

    clip = speech_like_clip(duration=1.0, seed=7)
    fcfg = FeatureConfig()
    hop = fcfg.hop_length
    n = (len(clip) // hop) * hop
    x = clip.samples[:n]
    target_mel = aligned_frames(mel_spectrogram(clip, fcfg), n, hop)

    def mel_l1(wave):
        w = Waveform(np.clip(wave, -1, 1), fcfg.sample_rate)
        m = aligned_frames(mel_spectrogram(w, fcfg), n, hop)
        return float(np.mean(np.abs(m - target_mel)))

    def hf_rms(wave):
        d = np.diff(wave)
        return float(np.sqrt(np.mean(d * d)))

    spec = SdeSpec.wide()
    mcfg = ScoreNetConfig.desk()
    scfg = SamplerConfig(n_steps=1000, corrector_steps_per_iter=1, snr=0.16,
                         seed=123, snapshot_steps=(200, 400, 600, 800, 1000))

    untrained = ScoreNet(mcfg, spec, np.random.default_rng(1))
    wave0, _ = generate(target_mel, untrained, spec, scfg)

    net = ScoreNet(mcfg, spec, np.random.default_rng(0))
    tcfg = TrainingConfig(batch_size=1, segment_length=4096, max_steps=3000,
                          checkpoint_every=1000, seed=0)
    dataset = ClipDataset(items=[(x, target_mel)], hop=hop)
    ckpt_dir = tmp_path_factory.mktemp("overfit_ckpt")
    losses = train(dataset, net, spec, tcfg, ckpt_dir)

    wave1, traj = generate(target_mel, net, spec, scfg)
    hf = {level: hf_rms(traj.state_at(level)[0])
          for level in (1000, 800, 600, 400, 200)}

    return {
        "losses": losses,
        "untrained_mel_l1": mel_l1(wave0),
        "trained_mel_l1": mel_l1(wave1),
        "hf": hf,
    }
