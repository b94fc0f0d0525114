"""
Слои сети: свертка с нулевым дополнением, поканальное аффинное
преобразование и функции активации.

Все тензоры имеют форму (N, C, H, W) и тип float64.
"""

import math
from typing import Dict, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from crowd_prompt.network.base import BaseLayer


class Conv2D(BaseLayer):
    """Свертка k×k с шагом 1 и нулевым дополнением (выход того же размера)."""

    def __init__(self, name: str, in_channels: int, out_channels: int, kernel_size: int = 3,
                 weight_scale: float = 1.0, bias_init: float = 0.0):
        super().__init__(name)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.weight_scale = weight_scale
        self.bias_init = bias_init

    @property
    def weight_name(self) -> str:
        return f"{self.name}.weight"

    @property
    def bias_name(self) -> str:
        return f"{self.name}.bias"

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        k = self.kernel_size
        return {
            self.weight_name: (self.out_channels, self.in_channels, k, k),
            self.bias_name: (self.out_channels,)
        }

    def init_params(self, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        # He: std = sqrt(2 / fan_in)
        fan_in = self.in_channels * self.kernel_size * self.kernel_size
        std = math.sqrt(2.0 / fan_in) * self.weight_scale
        shapes = self.param_shapes()
        return {
            self.weight_name: rng.normal(0.0, std, size=shapes[self.weight_name]),
            self.bias_name: np.full(shapes[self.bias_name], self.bias_init, dtype=np.float64)
        }

    def _columns(self, x: np.ndarray) -> np.ndarray:
        n, c, h, w = x.shape
        k = self.kernel_size
        pad = k // 2
        padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        # (N, C, H, W, k, k) -> (N·H·W, C·k·k)
        windows = sliding_window_view(padded, (k, k), axis=(2, 3))
        return windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * k * k)

    def forward(self, params: Dict[str, np.ndarray], x: np.ndarray) -> Tuple[np.ndarray, tuple]:
        n, _, h, w = x.shape
        cols = self._columns(x)
        weight = params[self.weight_name].reshape(self.out_channels, -1)
        out = cols @ weight.T + params[self.bias_name]
        out = out.reshape(n, h, w, self.out_channels).transpose(0, 3, 1, 2)
        return np.ascontiguousarray(out), (cols, x.shape)

    def backward(self, params: Dict[str, np.ndarray], cache: tuple,
                 grad_out: np.ndarray) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        cols, shape = cache
        n, c, h, w = shape
        k = self.kernel_size
        pad = k // 2

        g = grad_out.transpose(0, 2, 3, 1).reshape(-1, self.out_channels)
        weight = params[self.weight_name]
        grads = {
            self.weight_name: (g.T @ cols).reshape(weight.shape),
            self.bias_name: g.sum(axis=0)
        }

        dcols = (g @ weight.reshape(self.out_channels, -1)).reshape(n, h, w, c, k, k)
        dpadded = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
        for i in range(k):
            for j in range(k):
                dpadded[:, :, i:i + h, j:j + w] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dpadded[:, :, pad:pad + h, pad:pad + w], grads


class ChannelAffine(BaseLayer):
    """Поканальные масштаб и сдвиг (замена пакетной нормализации без статистик)."""

    def __init__(self, name: str, channels: int):
        super().__init__(name)
        self.channels = channels

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {f"{self.name}.scale": (self.channels,), f"{self.name}.shift": (self.channels,)}

    def init_params(self, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        return {
            f"{self.name}.scale": np.ones(self.channels, dtype=np.float64),
            f"{self.name}.shift": np.zeros(self.channels, dtype=np.float64)
        }

    def forward(self, params: Dict[str, np.ndarray], x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        scale = params[f"{self.name}.scale"][None, :, None, None]
        shift = params[f"{self.name}.shift"][None, :, None, None]
        return x * scale + shift, x

    def backward(self, params: Dict[str, np.ndarray], cache: np.ndarray,
                 grad_out: np.ndarray) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        x = cache
        grads = {
            f"{self.name}.scale": (grad_out * x).sum(axis=(0, 2, 3)),
            f"{self.name}.shift": grad_out.sum(axis=(0, 2, 3))
        }
        return grad_out * params[f"{self.name}.scale"][None, :, None, None], grads


def relu(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """ReLU и маска активных элементов."""
    active = x > 0
    return np.where(active, x, 0.0), active


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Логистическая функция без переполнения."""
    out = np.empty_like(x, dtype=np.float64)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    z = np.exp(x[~positive])
    out[~positive] = z / (1.0 + z)
    return out
