"""Trainable parameters, the layer types the score network needs, and Adam.

Weight init is Kaiming-uniform for conv/linear weights and zeros for biases;
layers accept ``zero_init=True`` for heads that must start as the zero map.
All parameters carry a dotted name used by the checkpoint format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, NumericalError


class Parameter(Tensor):
    __slots__ = ("name", "adam_m", "adam_v")

    def __init__(self, data: np.ndarray, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.data.shape})"


@dataclass
class AdamConfig:
    learning_rate: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ConfigError(
                f"betas must lie in (0, 1), got beta1={self.beta1}, beta2={self.beta2}"
            )
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.step_count < 0:
            raise ConfigError(f"step_count must be >= 0, got {self.step_count}")


def adam_step(params, config: AdamConfig):
    """One bias-corrected Adam update; consumes and clears gradients.

    A parameter with no gradient is treated as having a zero gradient (its
    moments still decay).  Non-finite gradients abort naming the parameter.
    """
    config.step_count += 1
    t = config.step_count
    bc1 = 1.0 - config.beta1**t
    bc2 = 1.0 - config.beta2**t
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise NumericalError(
                f"non-finite gradient for parameter {p.name!r} at adam step {t}"
            )
        p.adam_m = config.beta1 * p.adam_m + (1.0 - config.beta1) * g
        p.adam_v = config.beta2 * p.adam_v + (1.0 - config.beta2) * (g * g)
        m_hat = p.adam_m / bc1
        v_hat = p.adam_v / bc2
        p.data = p.data - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
        p.grad = None


def _kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv1d:
    """Dilated 1-D convolution, weight [Co, Ci, K].

    padding is an explicit sample count or "same" (odd kernels only), which
    preserves length via dilation*(K-1)//2 zeros per side.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        dilation: int = 1,
        padding="same",
        bias: bool = True,
        zero_init: bool = False,
        name: str = "conv",
    ):
        if padding == "same":
            if kernel_size % 2 == 0:
                raise ConfigError(
                    f"'same' padding requires an odd kernel, got {kernel_size}"
                )
            padding = dilation * (kernel_size - 1) // 2
        self.dilation = dilation
        self.padding = int(padding)
        shape = (out_channels, in_channels, kernel_size)
        data = np.zeros(shape) if zero_init else _kaiming_uniform(rng, shape, in_channels * kernel_size)
        self.weight = Parameter(data, f"{name}.weight")
        self.bias = Parameter(np.zeros(out_channels), f"{name}.bias") if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = ad.conv1d(x, self.weight, dilation=self.dilation, padding=self.padding)
        if self.bias is not None:
            y = y + ad.reshape(self.bias, (1, -1, 1))
        return y

    def parameters(self):
        return [self.weight] + ([self.bias] if self.bias is not None else [])


class ConvTranspose1d:
    """Strided transposed 1-D convolution, weight [Ci, Co, K]."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        bias: bool = True,
        name: str = "conv_t",
    ):
        self.stride = stride
        shape = (in_channels, out_channels, kernel_size)
        data = _kaiming_uniform(rng, shape, in_channels * kernel_size)
        self.weight = Parameter(data, f"{name}.weight")
        self.bias = Parameter(np.zeros(out_channels), f"{name}.bias") if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = ad.conv_transpose1d(x, self.weight, stride=self.stride)
        if self.bias is not None:
            y = y + ad.reshape(self.bias, (1, -1, 1))
        return y

    def parameters(self):
        return [self.weight] + ([self.bias] if self.bias is not None else [])


class Linear:
    """Affine map on trailing feature axis of a matrix input: y = x @ W + b."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        bias: bool = True,
        zero_init: bool = False,
        name: str = "linear",
    ):
        shape = (in_features, out_features)
        data = np.zeros(shape) if zero_init else _kaiming_uniform(rng, shape, in_features)
        self.weight = Parameter(data, f"{name}.weight")
        self.bias = Parameter(np.zeros(out_features), f"{name}.bias") if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = ad.matmul(x, self.weight)
        if self.bias is not None:
            y = y + ad.reshape(self.bias, (1, -1))
        return y

    def parameters(self):
        return [self.weight] + ([self.bias] if self.bias is not None else [])
