"""
Базовые типы сети: план каналов и абстрактный слой.
"""

from abc import ABC, abstractmethod
from typing import Any, Dict, List, Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator


class ChannelPlan(BaseModel):
    """План каналов двухветвевой сети."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    in_channels: int = 3
    backbone: List[int] = [16, 32]
    branch: List[int] = [16, 8]
    kernel_size: int = 3
    gated: bool = True
    activation: Literal["relu", "identity"] = "relu"

    @field_validator("in_channels")
    @classmethod
    def _positive_input(cls, value: int) -> int:
        if value < 1:
            raise ValueError(f"число входных каналов должно быть ≥ 1: {value}")
        return value

    @field_validator("backbone", "branch")
    @classmethod
    def _positive_channels(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("список каналов не может быть пустым")
        if any(c < 1 for c in value):
            raise ValueError(f"число каналов должно быть ≥ 1: {value}")
        return value

    @field_validator("kernel_size")
    @classmethod
    def _odd_kernel(cls, value: int) -> int:
        if value < 1 or value % 2 == 0:
            raise ValueError(f"размер ядра свертки должен быть нечетным: {value}")
        return value

    @property
    def features(self) -> int:
        """Число каналов на выходе ветвей (вход голов)."""
        return self.branch[-1]


class BaseLayer(ABC):
    """Базовый слой с явным прямым и обратным проходом."""

    def __init__(self, name: str):
        """
        Инициализация слоя.

        Args:
            name: Префикс имен параметров слоя
        """
        self.name = name

    @abstractmethod
    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        """
        Формы параметров слоя в фиксированном порядке.

        Returns:
            Dict[str, Tuple[int, ...]]: Полное имя параметра -> форма
        """
        pass

    @abstractmethod
    def init_params(self, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        """
        Начальные значения параметров.

        Args:
            rng: Генератор случайных чисел

        Returns:
            Dict[str, np.ndarray]: Параметры слоя
        """
        pass

    @abstractmethod
    def forward(self, params: Dict[str, np.ndarray], x: np.ndarray) -> Tuple[np.ndarray, Any]:
        """
        Прямой проход по батчу (N, C, H, W).

        Returns:
            Tuple[np.ndarray, Any]: Выход и данные для обратного прохода
        """
        pass

    @abstractmethod
    def backward(self, params: Dict[str, np.ndarray], cache: Any,
                 grad_out: np.ndarray) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        """
        Обратный проход.

        Returns:
            Tuple[np.ndarray, Dict[str, np.ndarray]]: Градиент по входу и по параметрам
        """
        pass

    def param_count(self) -> int:
        """Число скалярных параметров слоя."""
        return int(sum(np.prod(shape) for shape in self.param_shapes().values()))
