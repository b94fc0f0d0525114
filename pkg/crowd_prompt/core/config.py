"""
Менеджер конфигурации Crowd Prompt.
"""

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from crowd_prompt.core.bench import SceneSpec
from crowd_prompt.core.trainer import TrainConfig
from crowd_prompt.modules.constants import (
    ABLATION_ORDER, DEFAULT_BATCH_SIZE, DEFAULT_LEARNING_RATE, DEFAULT_NOISE_ALPHAS,
    DEFAULT_TAU_MASK, DEFAULT_WEIGHT_GRID, PseudoSource
)
from crowd_prompt.modules.errors import ConfigError
from crowd_prompt.modules.factory import VariantFactory
from crowd_prompt.modules.losses import LossWeights
from crowd_prompt.modules.prompt import PromptConfig
from crowd_prompt.modules.targets import KernelSpec
from crowd_prompt.network.base import ChannelPlan


class TrainSettings(BaseModel):
    """Секция train."""
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=120, ge=1)
    learning_rate: float = Field(default=DEFAULT_LEARNING_RATE, gt=0.0)
    batch_size: int = Field(default=DEFAULT_BATCH_SIZE, ge=1)
    tau_mask: float = Field(default=DEFAULT_TAU_MASK, gt=0.0, lt=1.0)
    pretrain_epochs: int = Field(default=30, ge=0)
    dilation_radius: float = Field(default=2.0, ge=0.0)
    pseudo_source: PseudoSource = PseudoSource.BOX


class ExperimentSettings(BaseModel):
    """Секция experiments: размеры набора и сетки перебора."""
    model_config = ConfigDict(extra="forbid")

    n_train: int = Field(default=200, ge=1)
    n_test: int = Field(default=50, ge=0)
    alphas: List[float] = list(DEFAULT_NOISE_ALPHAS)
    ablation_variants: List[str] = list(ABLATION_ORDER)
    noise_variants: List[str] = ["rsg", "ddag"]
    iou_variants: List[str] = ["rsg", "ddag"]
    convergence_lambdas: List[float] = [0.0, 1.0]
    k_values: List[int] = [1, 3, 5]
    kappa_values: List[int] = [0, 10, 20, 40]
    weight_grid: List[List[float]] = [list(row) for row in DEFAULT_WEIGHT_GRID]

    @model_validator(mode="after")
    def _grids(self) -> "ExperimentSettings":
        if any(not 0.0 <= a <= 0.5 for a in self.alphas):
            raise ValueError(f"alpha должны лежать в [0, 0.5]: {self.alphas}")
        if any(k < 1 for k in self.k_values):
            raise ValueError(f"K должно быть ≥ 1: {self.k_values}")
        if any(len(row) != 3 or min(row) < 0 for row in self.weight_grid):
            raise ValueError("строки weight_grid - тройки неотрицательных (λd, λs, λc)")
        return self


class CacheSettings(BaseModel):
    """Секция cache: кэш контекстных масок."""
    model_config = ConfigDict(extra="forbid")

    enabled: bool = True
    cache_file: Optional[str] = None


class LoggingSettings(BaseModel):
    """Секция logging."""
    model_config = ConfigDict(extra="forbid")

    level: str = "INFO"
    format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    file: Optional[str] = "logs/crowd_prompt.log"
    progress: bool = True


class RunConfig(BaseModel):
    """Полная проверенная конфигурация запуска."""
    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    variant: str = "ddag"
    output_dir: str = "runs"
    scene: SceneSpec = SceneSpec()
    kernel: KernelSpec = KernelSpec()
    prompt: PromptConfig = PromptConfig()
    weights: LossWeights = LossWeights()
    train: TrainSettings = TrainSettings()
    plan: ChannelPlan = ChannelPlan()
    experiments: ExperimentSettings = ExperimentSettings()
    cache: CacheSettings = CacheSettings()
    logging: LoggingSettings = LoggingSettings()

    @model_validator(mode="after")
    def _cross_fields(self) -> "RunConfig":
        if self.prompt.kappa > self.train.epochs:
            raise ValueError(f"prompt.kappa ({self.prompt.kappa}) больше train.epochs ({self.train.epochs})")
        return self

    def scene_spec(self) -> SceneSpec:
        """Параметры генератора с зерном запуска."""
        return self.scene.model_copy(update={"seed": self.seed})

    def to_train_config(self) -> TrainConfig:
        """Параметры тренера из секций конфигурации."""
        return TrainConfig(
            epochs=self.train.epochs,
            learning_rate=self.train.learning_rate,
            batch_size=self.train.batch_size,
            seed=self.seed,
            prompt=self.prompt,
            weights=self.weights,
            kernel=self.kernel,
            plan=self.plan,
            tau_mask=self.train.tau_mask,
            pretrain_epochs=self.train.pretrain_epochs,
            dilation_radius=self.train.dilation_radius,
            pseudo_source=self.train.pseudo_source,
            progress=self.logging.progress
        )

    def config_hash(self) -> str:
        """SHA-256 канонического JSON (ключи отсортированы)."""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ConfigManager:
    """Менеджер конфигурации."""

    def __init__(self, config_path: Optional[str] = "config.yaml"):
        """
        Инициализация менеджера конфигурации.

        Args:
            config_path: Путь к файлу конфигурации (YAML или JSON)
        """
        self.config_path = config_path
        self._config: Optional[Dict[str, Any]] = None
        self.load_config()

    def load_config(self) -> None:
        """
        Загрузить конфигурацию из файла.

        Raises:
            ConfigError: Файл существует, но не разбирается
        """
        if not self.config_path or not os.path.exists(self.config_path):
            self._config = self._get_default_config()
            return
        try:
            with open(self.config_path, "r", encoding="utf-8") as f:
                loaded = yaml.safe_load(f)
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError.from_template("CONFIG_PARSE", path=self.config_path, details=e)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError.from_template(
                "CONFIG_PARSE", path=self.config_path, details="ожидался словарь верхнего уровня"
            )
        self._config = loaded

    def _get_default_config(self) -> Dict[str, Any]:
        """Получить конфигурацию по умолчанию."""
        return RunConfig().model_dump(mode="json")

    def get(self, key: str, default: Any = None) -> Any:
        """
        Получить значение конфигурации по ключу.

        Args:
            key: Ключ конфигурации (точечная нотация, например 'train.epochs')
            default: Значение по умолчанию

        Returns:
            Any: Значение конфигурации
        """
        if not self._config:
            return default

        value = self._config
        try:
            for k in key.split("."):
                value = value[k]
            return value
        except (KeyError, TypeError):
            return default

    def get_train_config(self) -> Dict[str, Any]:
        """Получить секцию обучения."""
        return self.get("train", {})

    def get_experiments_config(self) -> Dict[str, Any]:
        """Получить секцию экспериментов."""
        return self.get("experiments", {})

    def get_cache_config(self) -> Dict[str, Any]:
        """Получить секцию кэша контекстных масок."""
        return self.get("cache", {})

    def get_logging_config(self) -> Dict[str, Any]:
        """Получить секцию логирования."""
        return self.get("logging", {})

    def run_config(self) -> RunConfig:
        """
        Проверить конфигурацию и вернуть типизированную модель.

        Raises:
            ConfigError: Нарушение схемы или перекрестных ограничений
            VariantError: Неизвестный вариант
        """
        try:
            cfg = RunConfig.model_validate(self.config)
        except ValidationError as e:
            raise ConfigError.from_template("CONFIG_INVALID", details=e)
        VariantFactory.resolve_name(cfg.variant)
        return cfg

    def ensure_directories(self) -> None:
        """Создать необходимые директории."""
        Path(self.get("output_dir", "runs")).mkdir(parents=True, exist_ok=True)

        log_file = self.get("logging.file")
        if log_file:
            Path(log_file).parent.mkdir(parents=True, exist_ok=True)

        cache_file = self.get("cache.cache_file")
        if cache_file:
            Path(cache_file).parent.mkdir(parents=True, exist_ok=True)

    def reload_config(self) -> None:
        """Перезагрузить конфигурацию."""
        self.load_config()

    def save_config(self, config_path: Optional[str] = None) -> None:
        """
        Сохранить текущую конфигурацию в файл.

        Args:
            config_path: Путь для сохранения (если None, используется текущий путь)
        """
        if not self._config:
            return

        save_path = config_path or self.config_path
        with open(save_path, "w", encoding="utf-8") as f:
            yaml.safe_dump(self._config, f, default_flow_style=False, allow_unicode=True, sort_keys=False)

    def update_config(self, key: str, value: Any) -> None:
        """
        Обновить значение конфигурации.

        Args:
            key: Ключ конфигурации (поддерживает точечную нотацию)
            value: Новое значение
        """
        if not self._config:
            self._config = {}

        keys = key.split(".")
        config = self._config

        # Создаем вложенную структуру если необходимо
        for k in keys[:-1]:
            if not isinstance(config.get(k), dict):
                config[k] = {}
            config = config[k]

        config[keys[-1]] = value

    @property
    def config(self) -> Dict[str, Any]:
        """Получить полную конфигурацию."""
        return self._config or {}
