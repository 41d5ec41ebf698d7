"""Analytic 1-D densities with exact scores, for validation and toy training.

Both densities are closed under Gaussian perturbation: convolving with
N(0, v) just widens the (component) variances, so the exact score of the
noised marginal is available for ESM-vs-DSM checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class GaussianDensity:
    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if self.variance <= 0:
            raise DomainError(f"variance must be positive, got {self.variance}")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.mean + np.sqrt(self.variance) * rng.standard_normal(n)

    def score(self, x) -> np.ndarray:
        return -(np.asarray(x, dtype=np.float64) - self.mean) / self.variance

    def log_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return -0.5 * np.log(2 * np.pi * self.variance) - (x - self.mean) ** 2 / (2 * self.variance)

    def perturbed(self, added_variance: float) -> "GaussianDensity":
        """Density of X + N(0, added_variance)."""
        return GaussianDensity(self.mean, self.variance + added_variance)


@dataclass(frozen=True)
class MixtureDensity:
    weights: tuple
    means: tuple
    variances: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or len(w) != len(self.means) or len(w) != len(self.variances):
            raise DomainError("weights, means, variances must have equal lengths")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError(f"weights must be positive and sum to 1, got {self.weights}")
        if any(v <= 0 for v in self.variances):
            raise DomainError(f"variances must be positive, got {self.variances}")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights))
        mu = np.asarray(self.means)[comp]
        sd = np.sqrt(np.asarray(self.variances)[comp])
        return mu + sd * rng.standard_normal(n)

    def _log_component_densities(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)[..., None]
        mu = np.asarray(self.means)
        var = np.asarray(self.variances)
        return (
            np.log(np.asarray(self.weights))
            - 0.5 * np.log(2 * np.pi * var)
            - (x - mu) ** 2 / (2 * var)
        )

    def log_density(self, x) -> np.ndarray:
        lc = self._log_component_densities(x)
        m = lc.max(axis=-1, keepdims=True)
        return (m + np.log(np.exp(lc - m).sum(axis=-1, keepdims=True)))[..., 0]

    def score(self, x) -> np.ndarray:
        """Responsibility-weighted component scores (exact mixture gradient)."""
        x_arr = np.asarray(x, dtype=np.float64)
        lc = self._log_component_densities(x_arr)
        m = lc.max(axis=-1, keepdims=True)
        resp = np.exp(lc - m)
        resp /= resp.sum(axis=-1, keepdims=True)
        comp_scores = -(x_arr[..., None] - np.asarray(self.means)) / np.asarray(self.variances)
        return (resp * comp_scores).sum(axis=-1)

    def perturbed(self, added_variance: float) -> "MixtureDensity":
        """Mixture of X + N(0, v): each component variance grows by v."""
        if added_variance < 0:
            raise DomainError(f"added variance must be >= 0, got {added_variance}")
        return MixtureDensity(
            self.weights,
            self.means,
            tuple(v + added_variance for v in self.variances),
        )
