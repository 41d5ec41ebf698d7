"""Predictor-corrector reverse-time sampling, plus the forward simulator.

The predictor is the reverse-SDE Euler-Maruyama step

    x(k*dt) = x((k+1)*dt) + g(t_{k+1})^2 * score * dt + g(t_{k+1}) * sqrt(dt) * xi

and the corrector is Langevin dynamics x <- x + eps*score + sqrt(2*eps)*xi,
run top-down from the prior at time level k = N-1 .. 0.  Snapshot indices are
time levels: level N is the prior draw, level 0 the finished sample, so the
final state always sits at step 0 of a trajectory.

Noise for time level k comes from a Generator seeded with (seed, k), making
trajectories bit-reproducible and independent of snapshot requests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, NumericalError, ShapeError
from .sde import SdeSpec, VeSde

EPSILON_RULES = ("snr_adaptive", "fixed")


@dataclass
class SamplerConfig:
    n_steps: int = 1000
    corrector_steps_per_iter: int = 1
    snr: float = 0.16
    epsilon_rule: str = "snr_adaptive"
    fixed_epsilon: float = 1e-5
    seed: int = 0
    snapshot_steps: tuple = ()

    def __post_init__(self):
        if not isinstance(self.n_steps, (int, np.integer)) or self.n_steps < 1:
            raise ConfigError(f"n_steps must be a positive integer, got {self.n_steps!r}")
        if self.corrector_steps_per_iter < 0:
            raise ConfigError(
                f"corrector_steps_per_iter must be >= 0, got {self.corrector_steps_per_iter}"
            )
        if self.snr <= 0:
            raise ConfigError(f"snr must be positive, got {self.snr}")
        if self.epsilon_rule not in EPSILON_RULES:
            raise ConfigError(
                f"epsilon_rule must be one of {EPSILON_RULES}, got {self.epsilon_rule!r}"
            )
        if self.fixed_epsilon <= 0:
            raise ConfigError(f"fixed_epsilon must be positive, got {self.fixed_epsilon}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        steps = tuple(int(s) for s in self.snapshot_steps)
        if any(s < 0 or s > self.n_steps for s in steps):
            raise ConfigError(
                f"snapshot_steps must lie in [0, {self.n_steps}], got {steps}"
            )
        self.snapshot_steps = steps


@dataclass
class Trajectory:
    """Ordered (time-level, state) snapshots, as recorded (levels descending
    for reverse runs, ascending for forward runs)."""

    snapshots: list = field(default_factory=list)

    def record(self, step: int, state: np.ndarray):
        self.snapshots.append((step, np.array(state, copy=True)))

    def steps(self):
        return [s for s, _ in self.snapshots]

    def state_at(self, step: int) -> np.ndarray:
        for s, x in self.snapshots:
            if s == step:
                return x
        raise KeyError(f"no snapshot at step {step}")


def level_rng(seed: int, level: int) -> np.random.Generator:
    """Noise source for one time level of a sampling run."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(level,)))


def forward_simulate(spec: SdeSpec, x0, noise_source,
                     snapshot_steps=()) -> Trajectory:
    """Euler-Maruyama for the forward (noising) SDE; diagnostics only.

    x(i+1) = x(i) + g(i*dt)*sqrt(dt)*xi, i = 0..N-1 (the drift is zero).
    Snapshots are recorded at the requested step indices (state after i
    steps, i.e. time i*dt); the final step N is always recorded.
    """
    sde = VeSde(spec)
    x = np.array(x0, dtype=np.float64, copy=True)
    dt = spec.dt
    sqrt_dt = math.sqrt(dt)
    wanted = set(int(s) for s in snapshot_steps)
    traj = Trajectory()
    if 0 in wanted:
        traj.record(0, x)
    for i in range(spec.n_steps):
        g = sde.diffusion_coeff(i * dt)
        x = x + g * sqrt_dt * noise_source.standard_normal(x.shape)
        step = i + 1
        if step in wanted or step == spec.n_steps:
            traj.record(step, x)
    return traj


def _check_score_shape(s: np.ndarray, x: np.ndarray):
    if s.shape != x.shape:
        raise ShapeError(f"score shape {s.shape} != state shape {x.shape}")


def predictor_step(x, k: int, spec: SdeSpec, score_fn, mel, noise_source):
    """Reverse-SDE Euler-Maruyama from time (k+1)*dt down to k*dt."""
    if not (0 <= k < spec.n_steps):
        raise ConfigError(f"k must lie in [0, {spec.n_steps - 1}], got {k}")
    x = np.asarray(x, dtype=np.float64)
    sde = VeSde(spec)
    dt = spec.dt
    t_next = max((k + 1) * dt, spec.t_min)
    g = sde.diffusion_coeff(t_next)
    score = np.asarray(score_fn(x, t_next, mel), dtype=np.float64)
    _check_score_shape(score, x)
    noise = noise_source.standard_normal(x.shape)
    return x + (g * g) * score * dt + g * math.sqrt(dt) * noise


def corrector_step(x, k: int, spec: SdeSpec, score_fn, mel,
                   config: SamplerConfig, noise_source):
    """One Langevin step at time level k (score evaluated at max(k*dt, t_min)).

    snr_adaptive recomputes eps = 2*(snr*||xi|| / ||score||)^2 each call and
    falls back to fixed_epsilon when the score norm vanishes.
    """
    x = np.asarray(x, dtype=np.float64)
    t_eval = max(k * spec.dt, spec.t_min)
    score = np.asarray(score_fn(x, t_eval, mel), dtype=np.float64)
    _check_score_shape(score, x)
    noise = noise_source.standard_normal(x.shape)
    if config.epsilon_rule == "snr_adaptive":
        score_norm = float(np.linalg.norm(score))
        if score_norm == 0.0:
            eps = config.fixed_epsilon
        else:
            noise_norm = float(np.linalg.norm(noise))
            eps = 2.0 * (config.snr * noise_norm / score_norm) ** 2
    else:
        eps = config.fixed_epsilon
    return x + eps * score + math.sqrt(2.0 * eps) * noise


def pc_sample(score_fn, spec: SdeSpec, config: SamplerConfig, shape,
              mel=None, rng_factory=level_rng) -> tuple[np.ndarray, Trajectory]:
    """Run the full predictor-corrector chain from the prior.

    score_fn(x, t, mel) -> score array of x's shape.  `shape` is the state
    shape (e.g. (batch, d)).  Returns (final state, trajectory); the
    trajectory always contains time level 0.  rng_factory(seed, level) may be
    swapped out to inject deterministic noise in tests.
    """
    spec = replace(spec, n_steps=config.n_steps)
    n = config.n_steps
    wanted = set(config.snapshot_steps)
    init_rng = rng_factory(config.seed, n)
    x = spec.sigma1 * init_rng.standard_normal(shape)
    traj = Trajectory()
    if n in wanted:
        traj.record(n, x)
    for k in range(n - 1, -1, -1):
        rng = rng_factory(config.seed, k)
        x = predictor_step(x, k, spec, score_fn, mel, rng)
        for _ in range(config.corrector_steps_per_iter):
            x = corrector_step(x, k, spec, score_fn, mel, config, rng)
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"non-finite state at time level {k}")
        if k in wanted or k == 0:
            traj.record(k, x)
    return x, traj


def generate(mel, score_net, spec: SdeSpec, config: SamplerConfig, hop: int = 256):
    """Synthesize a waveform conditioned on one mel matrix [frames, n_mels].

    Output length is frames*hop.  score_net may be a ScoreNet (its mel
    conditioner is precomputed once and reused across all time levels, and
    hop comes from its config) or any plain callable score_fn(x, t, mel).

    Returns (waveform [length], trajectory).
    """
    mel = np.asarray(mel, dtype=np.float64)
    if mel.ndim != 2:
        raise ShapeError(f"mel must be [frames, n_mels], got shape {mel.shape}")
    if hasattr(score_net, "prepare_conditioner"):
        hop = score_net.config.hop
        length = mel.shape[0] * hop
        conditioner = score_net.prepare_conditioner(mel.T[None], length)

        def score_fn(x, t, _mel):
            return score_net.score(x, t, conditioner)

    else:
        length = mel.shape[0] * hop
        score_fn = score_net
    x, traj = pc_sample(score_fn, spec, config, (1, length), mel=None)
    return x[0], traj


def trajectory_stats(traj: Trajectory) -> list:
    """Rows of (step, rms, min, max) in recorded order, for plotting."""
    rows = []
    for step, state in traj.snapshots:
        flat = state.ravel()
        rows.append((
            step,
            float(np.sqrt(np.mean(flat**2))),
            float(flat.min()),
            float(flat.max()),
        ))
    return rows
