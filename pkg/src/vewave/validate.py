"""Self-contained analytic validation battery.

Every check here needs no dataset, no checkpoint, and no trained model beyond
its own toy fit: closed-form scores vs finite differences, the variance ODE
vs its closed form, Monte-Carlo forward simulation, Langevin stationarity,
full predictor-corrector recovery of a known Gaussian, and the DSM-to-ESM
equivalence on an analytic mixture.

`run_battery` returns machine-readable rows; the CLI renders them as a table.
The score function under test is injectable so a deliberately corrupted
formula (sign flip) demonstrably fails the finite-difference check.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import autodiff as ad
from .autodiff import Tensor
from .errors import NumericalError
from .nn import AdamConfig, Linear, adam_step
from .sampler import SamplerConfig, corrector_step, forward_simulate, pc_sample
from .sde import SdeSpec, VeSde
from .toys import MixtureDensity
from .training import esm_validation


@dataclass
class CheckRow:
    name: str
    measured: float
    expected: float
    tolerance: float
    passed: bool
    detail: str = ""
    seconds: float = 0.0


def _timed(fn):
    t0 = time.perf_counter()
    rows = fn()
    dt = time.perf_counter() - t0
    for r in rows:
        r.seconds = dt / len(rows)
    return rows


# ---- individual checks ------------------------------------------------------


def check_score_finite_difference(seed: int = 0, n_tuples: int = 1000,
                                  score_fn=None) -> list:
    """Analytic transition score vs central differences of the log-density.

    The log-density is quadratic in x, so central differences are exact up to
    rounding; any systematic discrepancy is a formula error.  `score_fn` may
    be replaced (mutation testing).
    """
    spec = SdeSpec.paper()
    sde = VeSde(spec)
    score_fn = score_fn or sde.score_of_transition
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_tuples):
        t = rng.uniform(spec.t_min, spec.t_max)
        x0 = rng.standard_normal(4)
        x_t, _ = sde.sample_transition(x0, t, rng)
        var = sde.transition_moments(t).variance

        def logp(x):
            return -0.5 * np.sum((x - x0) ** 2) / var - 0.5 * x.size * math.log(
                2 * math.pi * var
            )

        h = 1e-4 * math.sqrt(var)
        fd = np.empty_like(x_t)
        for i in range(x_t.size):
            e = np.zeros_like(x_t)
            e[i] = h
            fd[i] = (logp(x_t + e) - logp(x_t - e)) / (2 * h)
        analytic = score_fn(x_t, x0, t)
        denom = max(float(np.max(np.abs(fd))), 1e-12)
        worst = max(worst, float(np.max(np.abs(analytic - fd))) / denom)
    return [CheckRow("score_finite_difference", worst, 0.0, 1e-5, worst < 1e-5,
                     f"{n_tuples} random (x0, x_t, t) tuples")]


def _rk4_variance(spec: SdeSpec, t_grid: np.ndarray, substeps: int = 64) -> np.ndarray:
    """Integrate dV/dt = g(t)^2 (the variance ODE) with classic RK4."""
    sde = VeSde(spec)

    def f(t):
        g = sde.diffusion_coeff(min(t, spec.t_max))
        return g * g

    out = np.empty_like(t_grid)
    v = 0.0
    t = 0.0
    for j, t_next in enumerate(t_grid):
        n = max(1, int(substeps * max(t_next - t, 0) / spec.t_max) or 1)
        h = (t_next - t) / n if t_next > t else 0.0
        for _ in range(n):
            k1 = f(t)
            k2 = f(t + h / 2)
            k3 = f(t + h / 2)
            k4 = f(t + h)
            v += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
        t = t_next
        out[j] = v
    return out


def check_moment_ode(n_grid: int = 100) -> list:
    """Closed-form transition variance vs RK4 integration of the moment ODE."""
    rows = []
    for preset_name, spec in (("paper", SdeSpec.paper()), ("wide", SdeSpec.wide())):
        t_grid = np.linspace(spec.t_max / n_grid, spec.t_max, n_grid)
        numeric = _rk4_variance(spec, t_grid, substeps=2048)
        closed = np.array([VeSde(spec).transition_moments(float(t)).variance for t in t_grid])
        rel = float(np.max(np.abs(numeric - closed) / closed))
        rows.append(CheckRow(f"moment_ode_{preset_name}", rel, 0.0, 1e-8,
                             rel < 1e-8, f"{n_grid} grid points, RK4"))
    return rows


def check_forward_variance(seed: int = 0, n_paths: int = 10_000) -> list:
    """Forward Euler-Maruyama variance vs the closed form at three times."""
    spec = SdeSpec.paper()
    sde = VeSde(spec)
    times = (0.25, 0.5, 1.0)
    snapshot_steps = [int(round(t / spec.dt)) for t in times]
    rng = np.random.default_rng(seed)
    traj = forward_simulate(spec, np.zeros(n_paths), rng, snapshot_steps=snapshot_steps)
    rows = []
    for t, step in zip(times, snapshot_steps):
        measured = float(np.var(traj.state_at(step)))
        expected = sde.transition_moments(t).variance
        rel = abs(measured - expected) / expected
        rows.append(CheckRow(f"forward_variance_t{t:g}", measured, expected,
                             0.05 * expected, rel < 0.05,
                             f"{n_paths} paths, N={spec.n_steps}"))
    return rows


def check_prior_stats(seed: int = 0, n: int = 100_000) -> list:
    """Sample variance of prior draws vs sigma1^2 within 3 sigma."""
    spec = SdeSpec.wide()
    sde = VeSde(spec)
    rng = np.random.default_rng(seed)
    draws = sde.sample_prior(n, rng)
    measured = float(np.var(draws))
    expected = spec.sigma1**2
    three_sigma = 3.0 * expected * math.sqrt(2.0 / n)
    return [CheckRow("prior_variance", measured, expected, three_sigma,
                     abs(measured - expected) < three_sigma, f"{n} draws")]


def check_langevin_stationarity(seed: int = 0, n_chains: int = 100_000,
                                n_steps: int = 1000, eps: float = 0.01) -> list:
    """Corrector-only chains with the exact N(0,1) score vs a KS test.

    Chains are independent, started over-dispersed at x=2, and only the final
    state enters the pooled sample, so the KS test sees independent draws.
    """
    spec = SdeSpec.paper()
    config = SamplerConfig(epsilon_rule="fixed", fixed_epsilon=eps, seed=seed)
    rng = np.random.default_rng(seed)

    def unit_score(x, t, mel):
        return -x

    x = np.full(n_chains, 2.0)
    for _ in range(n_steps):
        x = corrector_step(x, 0, spec, unit_score, None, config, rng)
    d_stat, p_value = stats.kstest(x, "norm")
    alpha = 0.01
    crit = stats.ksone.ppf(1 - alpha / 2, n_chains)
    return [CheckRow("langevin_ks", float(d_stat), 0.0, float(crit),
                     p_value > alpha,
                     f"{n_chains} chains x {n_steps} steps, eps={eps}, p={p_value:.4f}")]


def check_gaussian_recovery(seed: int = 0, n_chains: int = 10_000) -> list:
    """Full predictor-corrector run against an analytic Gaussian target.

    Data distribution N(mu, s2); the marginal score at time t is
    -(x - mu)/(s2 + V(t)).  The sampler must recover both moments.
    """
    spec = SdeSpec.wide()
    sde = VeSde(spec)
    mu, s2 = 0.3, 0.0625
    # snr=0.10 keeps the Langevin variance inflation (factor ~1/(1-snr^2))
    # well inside the 5% budget; the sampler-wide default stays 0.16.
    config = SamplerConfig(n_steps=1000, corrector_steps_per_iter=1, snr=0.10,
                           seed=seed)

    def marginal_score(x, t, mel):
        return -(x - mu) / (s2 + sde.transition_moments(t).variance)

    x, _ = pc_sample(marginal_score, spec, config, (n_chains,))
    m, v = float(np.mean(x)), float(np.var(x))
    return [
        CheckRow("gaussian_recovery_mean", m, mu, 0.02, abs(m - mu) < 0.02,
                 f"{n_chains} chains, N={config.n_steps}"),
        CheckRow("gaussian_recovery_var", v, s2, 0.05 * s2,
                 abs(v - s2) < 0.05 * s2, f"predictor + 1 corrector, snr={config.snr}"),
    ]


# ---- DSM -> ESM toy ---------------------------------------------------------


class ToyScoreMlp:
    """1-D dense score model: 1 -> hidden -> hidden -> 1, tanh activations."""

    def __init__(self, hidden: int, rng):
        self.fc1 = Linear(1, hidden, rng, name="toy.fc1")
        self.fc2 = Linear(hidden, hidden, rng, name="toy.fc2")
        self.fc3 = Linear(hidden, 1, rng, name="toy.fc3")

    def forward(self, x) -> Tensor:
        h = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64).reshape(-1, 1))
        h = ad.tanh(self.fc1(h))
        h = ad.tanh(self.fc2(h))
        return self.fc3(h)

    def __call__(self, x) -> np.ndarray:
        with ad.no_grad():
            return self.forward(x).data[:, 0]

    def parameters(self):
        return self.fc1.parameters() + self.fc2.parameters() + self.fc3.parameters()


def fit_toy_dsm(density: MixtureDensity, noise_variance: float, seed: int = 0,
                steps: int = 4000, batch: int = 512, hidden: int = 96,
                lr: float = 1e-3):
    """DSM-train a dense net at one fixed noise scale; return (net, losses).

    Draw x0 from the density, perturb with N(0, noise_variance), regress on
    the transition score -(x_t - x0)/noise_variance.
    """
    rng = np.random.default_rng(seed)
    net = ToyScoreMlp(hidden, rng)
    adam = AdamConfig(learning_rate=lr)
    std = math.sqrt(noise_variance)
    losses = []
    for _ in range(steps):
        x0 = density.sample(batch, rng)
        xi = rng.standard_normal(batch)
        x_t = x0 + std * xi
        target = -xi / std
        pred = net.forward(x_t)
        diff = pred - Tensor(target.reshape(-1, 1))
        loss = ad.scale(ad.reduce_mean(ad.mul(diff, diff)), 0.5)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericalError("toy DSM training produced a non-finite loss")
        loss.backward()
        adam_step(net.parameters(), adam)
        losses.append(value)
    return net, losses


def check_dsm_esm(seed: int = 0, steps: int = 4000) -> list:
    """DSM training on a two-Gaussian mixture drives the ESM error below 0.05.

    The perturbed mixture has a closed-form score (component variances grow
    by the noise variance), so the ESM error is measured exactly.
    """
    density = MixtureDensity(weights=(0.5, 0.5), means=(-1.0, 1.0),
                             variances=(0.01, 0.0225))
    noise_variance = 0.0625
    net, _ = fit_toy_dsm(density, noise_variance, seed=seed, steps=steps)
    perturbed = density.perturbed(noise_variance)
    err = esm_validation(net, perturbed, n=20_000, rng=np.random.default_rng(seed + 1))
    return [CheckRow("dsm_esm_toy", err, 0.0, 0.05, err < 0.05,
                     f"{steps} DSM steps, analytic mixture score oracle")]


# ---- battery ---------------------------------------------------------------


def run_battery(seed: int = 0, fast: bool = False, score_fn=None) -> list:
    """Run every analytic check; returns CheckRow list.

    fast=True shrinks sample counts for unit-test speed (tolerances loosen
    accordingly only where driven by Monte-Carlo error; formula checks keep
    full precision).  score_fn overrides the transition score under test.
    """
    rows = []
    rows += _timed(lambda: check_score_finite_difference(
        seed, n_tuples=100 if fast else 1000, score_fn=score_fn))
    rows += _timed(lambda: check_moment_ode(n_grid=20 if fast else 100))
    rows += _timed(lambda: check_forward_variance(
        seed, n_paths=2000 if fast else 10_000))
    rows += _timed(lambda: check_prior_stats(seed, n=20_000 if fast else 100_000))
    rows += _timed(lambda: check_langevin_stationarity(
        seed, n_chains=20_000 if fast else 100_000))
    rows += _timed(lambda: check_gaussian_recovery(
        seed, n_chains=2000 if fast else 10_000))
    rows += _timed(lambda: check_dsm_esm(seed, steps=2500 if fast else 4000))
    return rows


def render_table(rows) -> str:
    header = "check\tmeasured\texpected\ttolerance\tstatus\tdetail"
    lines = [header]
    for r in rows:
        status = "pass" if r.passed else "FAIL"
        lines.append(
            f"{r.name}\t{r.measured:.6g}\t{r.expected:.6g}\t{r.tolerance:.3g}"
            f"\t{status}\t{r.detail}"
        )
    return "\n".join(lines)
