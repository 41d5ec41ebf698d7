"""Variance-exploding linear SDE: coefficients, transition moments, scores, prior.

The forward process is the driftless linear SDE

    dX = g(t) dW,    g(t) = sigma0 * (sigma1/sigma0)**t * sqrt(2*ln(sigma1/sigma0))

whose per-dimension transition variance has the closed form

    V(t) = sigma0**2 * (sigma1/sigma0)**(2t) - sigma0**2.

Everything here is a pure function of (spec, inputs, rng); noise sources are
passed explicitly so callers own determinism.  The ``LinearSde`` base captures
the general linear-SDE surface (drift / diffusion coefficient / transition
moments) so alternative schedules can be slotted in; only the
variance-exploding schedule ships.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "SdeSpec",
    "TransitionMoments",
    "LinearSde",
    "VeSde",
]


@dataclass(frozen=True)
class SdeSpec:
    """Parameters of the variance-exploding schedule.

    sigma0, sigma1   noise scales at t=0 and t=t_max (sigma1 > sigma0 > 0)
    t_max            diffusion horizon T
    t_min            training-time lower cutoff; keeps the score target
                     finite as the transition variance vanishes at t -> 0
    n_steps          number of discretization steps N (dt = t_max / n_steps)
    """

    sigma0: float = 0.01
    sigma1: float = 1.0
    t_max: float = 1.0
    t_min: float = 1e-5
    n_steps: int = 1000

    def __post_init__(self):
        if not (self.sigma0 > 0):
            raise DomainError(f"sigma0 must be positive, got {self.sigma0}")
        if not (self.sigma1 > self.sigma0):
            raise DomainError(
                f"sigma1 must exceed sigma0, got sigma1={self.sigma1} <= sigma0={self.sigma0}"
            )
        if not (self.t_max > 0) or not math.isfinite(self.t_max):
            raise DomainError(f"t_max must be positive and finite, got {self.t_max}")
        if not (0 < self.t_min < self.t_max):
            raise DomainError(
                f"t_min must lie in (0, t_max), got t_min={self.t_min}, t_max={self.t_max}"
            )
        if self.n_steps < 1:
            raise DomainError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.t_max / self.n_steps

    @property
    def log_ratio(self) -> float:
        """ln(sigma1 / sigma0); appears in both g(t) and dV/dt."""
        return math.log(self.sigma1 / self.sigma0)

    @classmethod
    def paper(cls, **overrides) -> "SdeSpec":
        """Preset with 2*ln(sigma1/sigma0) = 1, i.e. sigma1 = sigma0 * sqrt(e).

        Under this constraint the square-root factor in g(t) is exactly 1 and
        V(t) = sigma0**2 * (e**t - 1); used by the formula unit tests.
        """
        kw = dict(sigma0=0.01, sigma1=0.01 * math.sqrt(math.e))
        kw.update(overrides)
        return cls(**kw)

    @classmethod
    def wide(cls, **overrides) -> "SdeSpec":
        """Practical training preset: prior scale sigma1 = 1.0."""
        kw = dict(sigma0=0.01, sigma1=1.0)
        kw.update(overrides)
        return cls(**kw)


@dataclass(frozen=True)
class TransitionMoments:
    """Moments of the Gaussian transition density p(x(t) | x(0)).

    mean_shift multiplies x(0) (identically 1 for a driftless schedule);
    variance is per-dimension.  Either field may be an array when computed
    for a batch of times.
    """

    mean_shift: float | np.ndarray
    variance: float | np.ndarray


class LinearSde:
    """Interface of a linear SDE with Gaussian transition densities.

    Subclasses provide ``diffusion_coeff`` and ``transition_moments`` (and a
    drift, zero by default); sampling and score formulas below are generic in
    the moments.
    """

    spec: SdeSpec

    def __init__(self, spec: SdeSpec):
        self.spec = spec

    # -- schedule surface -------------------------------------------------

    def drift(self, x: np.ndarray, t) -> np.ndarray:
        self._check_t(t)
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    def diffusion_coeff(self, t):
        raise NotImplementedError

    def transition_moments(self, t) -> TransitionMoments:
        raise NotImplementedError

    # -- generic consequences of the moments -------------------------------

    def sample_transition(self, x0: np.ndarray, t, rng: np.random.Generator):
        """Draw x(t) ~ p(x(t)|x(0)) and return it with its score target.

        x0 may be a single vector or a batch [B, d]; t a scalar or a
        per-example array of shape [B].  Requires t >= t_min so the target
        -(x(t) - m*x0) / V(t) stays bounded.

        Returns ``(x_t, target_score)``.
        """
        self._check_t(t, lower=self.spec.t_min)
        x0 = np.asarray(x0, dtype=np.float64)
        moments = self.transition_moments(t)
        var = self._align(moments.variance, x0)
        shift = self._align(moments.mean_shift, x0)
        noise = rng.standard_normal(x0.shape)
        x_t = shift * x0 + np.sqrt(var) * noise
        target = -(x_t - shift * x0) / var
        return x_t, target

    def score_of_transition(self, x_t: np.ndarray, x0: np.ndarray, t) -> np.ndarray:
        """Gradient of log p(x(t)|x(0)) with respect to x(t)."""
        self._check_t(t, lower=self.spec.t_min)
        x_t = np.asarray(x_t, dtype=np.float64)
        x0 = np.asarray(x0, dtype=np.float64)
        moments = self.transition_moments(t)
        var = self._align(moments.variance, x_t)
        shift = self._align(moments.mean_shift, x_t)
        return -(x_t - shift * x0) / var

    def sample_prior(self, d: int, rng: np.random.Generator) -> np.ndarray:
        """Draw from the terminal Gaussian N(0, sigma1**2 I)."""
        if d < 1:
            raise DomainError(f"dimension must be >= 1, got {d}")
        return self.spec.sigma1 * rng.standard_normal(d)

    def log_prior(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        d = x.size
        s2 = self.spec.sigma1**2
        return -0.5 * d * math.log(2.0 * math.pi * s2) - float(np.sum(x * x)) / (2.0 * s2)

    # -- helpers ------------------------------------------------------------

    def _check_t(self, t, lower: float = 0.0):
        t_arr = np.asarray(t, dtype=np.float64)
        if np.any(t_arr < lower) or np.any(t_arr > self.spec.t_max):
            raise DomainError(
                f"t must lie in [{lower}, {self.spec.t_max}], got {t!r}"
            )

    @staticmethod
    def _align(value, like: np.ndarray):
        """Broadcast a per-example scalar/array against the trailing data axis."""
        value = np.asarray(value, dtype=np.float64)
        if value.ndim == 0 or like.ndim <= 1:
            return value
        return value.reshape(value.shape + (1,) * (like.ndim - value.ndim))


class VeSde(LinearSde):
    """Variance-exploding schedule: zero drift, geometric noise growth."""

    def diffusion_coeff(self, t):
        """g(t) = sigma0 * (sigma1/sigma0)**t * sqrt(2 * ln(sigma1/sigma0))."""
        self._check_t(t)
        spec = self.spec
        t = np.asarray(t, dtype=np.float64)
        g = spec.sigma0 * (spec.sigma1 / spec.sigma0) ** t * math.sqrt(2.0 * spec.log_ratio)
        return float(g) if g.ndim == 0 else g

    def transition_moments(self, t) -> TransitionMoments:
        """Closed-form solution of the moment ODEs: m(t)=1, V(t) geometric."""
        self._check_t(t)
        spec = self.spec
        t = np.asarray(t, dtype=np.float64)
        var = spec.sigma0**2 * (spec.sigma1 / spec.sigma0) ** (2.0 * t) - spec.sigma0**2
        if var.ndim == 0:
            return TransitionMoments(mean_shift=1.0, variance=float(var))
        return TransitionMoments(mean_shift=np.ones_like(var), variance=var)
