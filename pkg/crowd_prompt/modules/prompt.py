"""
Точечный промпт сегментатора: offline и online уточнение целевых масок,
контекстная маска по K ближайшим соседям и хранилище целевых масок.
"""

import hashlib
import logging
import threading
from typing import Dict, Iterator, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from crowd_prompt.modules.cache import ContextMaskCache
from crowd_prompt.modules.constants import DEFAULT_K, DEFAULT_KAPPA, DEFAULT_TAU_PRED, ERROR_MESSAGES
from crowd_prompt.modules.errors import DimensionMismatchError, UnknownSceneError
from crowd_prompt.modules.geometry import (
    binarize, check_same_shape, k_nearest_indices, mask_intersect, mask_union,
    min_enclosing_circle, rasterize_circle
)
from crowd_prompt.modules.targets import SceneAnnotation

logger = logging.getLogger(__name__)


class PromptConfig(BaseModel):
    """Параметры точечного промпта."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    K: int = Field(default=DEFAULT_K, ge=1)
    kappa: int = Field(default=DEFAULT_KAPPA, ge=0)
    tau_pred: float = Field(default=DEFAULT_TAU_PRED, ge=0.0)


def context_mask(ann: SceneAnnotation, K: int) -> np.ndarray:
    """
    Контекстная маска m_K: объединение минимальных окружностей вокруг каждой
    точки и её K ближайших соседей.

    Окружность строится по самой точке и её соседям; пиксель каждой
    аннотированной точки всегда входит в маску. При ≤ 1 точке маска полная.

    Args:
        ann: Аннотация сцены
        K: Число соседей

    Returns:
        np.ndarray: Бинарная маска (height, width)
    """
    points = ann.points
    if len(points) <= 1:
        return np.ones(ann.shape, dtype=bool)

    mask = np.zeros(ann.shape, dtype=bool)
    for index, anchor in enumerate(points):
        group = [anchor] + [points[i] for i in k_nearest_indices(points, index, K)]
        mask |= rasterize_circle(min_enclosing_circle(group), ann.width, ann.height)
    for p in points:
        px, py = p.pixel()
        mask[min(max(py, 0), ann.height - 1), min(max(px, 0), ann.width - 1)] = True
    return mask


def context_cache_key(ann: SceneAnnotation, K: int) -> str:
    """Ключ кэша m_K: сцена, размер, K и координаты точек."""
    digest = hashlib.sha1(f"{ann.width}x{ann.height}:{K}".encode("utf-8"))
    for p in ann.points:
        digest.update(f";{p.x!r},{p.y!r}".encode("utf-8"))
    return f"{ann.scene_id}-{digest.hexdigest()[:12]}"


def offline_prompt(m_p: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Offline промпт: m = m_p ∪ B(y) с порогом 0."""
    return mask_union(m_p, binarize(y, 0.0))


def online_prompt(m: np.ndarray, y_hat: np.ndarray, m_K: np.ndarray, tau_pred: float) -> np.ndarray:
    """
    Online промпт: m ← (m ∪ B(ŷ)) ∩ m_K.

    Args:
        m: Текущая целевая маска
        y_hat: Предсказанная плотность
        m_K: Контекстная маска
        tau_pred: Порог бинаризации предсказания

    Returns:
        np.ndarray: Обновленная целевая маска
    """
    check_same_shape(m, y_hat)
    return mask_intersect(mask_union(m, binarize(y_hat, tau_pred)), m_K)


class TargetStore:
    """Хранилище изменяемых целевых масок по сценам."""

    def __init__(self, cache: Optional[ContextMaskCache] = None):
        """
        Инициализация хранилища.

        Args:
            cache: Кэш контекстных масок (по умолчанию собственный)
        """
        self.masks: Dict[str, np.ndarray] = {}
        self.epoch_initialized: Dict[str, bool] = {}
        self.refresh_count: Dict[str, int] = {}
        self.context_cache = cache or ContextMaskCache()
        self._locks: Dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def initialize(self, scene_id: str, mask: np.ndarray, offline: bool = True) -> None:
        """
        Записать начальную маску сцены.

        Args:
            scene_id: Идентификатор сцены
            mask: Начальная маска (обычно результат offline_prompt)
            offline: Маска получена offline промптом
        """
        frozen = np.array(mask, dtype=bool)
        frozen.setflags(write=False)
        with self._registry_lock:
            self.masks[scene_id] = frozen
            self.epoch_initialized[scene_id] = offline
            self.refresh_count[scene_id] = 0
            self._locks.setdefault(scene_id, threading.Lock())

    def get(self, scene_id: str) -> np.ndarray:
        """Текущая маска сцены (массив только для чтения)."""
        try:
            return self.masks[scene_id]
        except KeyError:
            raise UnknownSceneError(ERROR_MESSAGES["UNKNOWN_SCENE"].format(scene=scene_id))

    def lock_for(self, scene_id: str) -> threading.Lock:
        """Эксклюзивный замок сцены."""
        if scene_id not in self._locks:
            raise UnknownSceneError(ERROR_MESSAGES["UNKNOWN_SCENE"].format(scene=scene_id))
        return self._locks[scene_id]

    def replace(self, scene_id: str, mask: np.ndarray) -> None:
        """Заменить маску сцены новой (старые ссылки остаются неизменными)."""
        current = self.get(scene_id)
        if mask.shape != current.shape:
            raise DimensionMismatchError.from_template(
                "DIMENSION_MISMATCH", left=current.shape, right=mask.shape
            )
        frozen = np.array(mask, dtype=bool)
        frozen.setflags(write=False)
        self.masks[scene_id] = frozen
        self.refresh_count[scene_id] += 1

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        return iter(sorted(self.masks.items()))

    def __contains__(self, scene_id: str) -> bool:
        return scene_id in self.masks

    def __len__(self) -> int:
        return len(self.masks)


def refresh_targets(store: TargetStore, scene_id: str, y_hat: np.ndarray,
                    ann: SceneAnnotation, cfg: PromptConfig, epoch: int) -> TargetStore:
    """
    Обновить целевую маску сцены online промптом начиная с эпохи κ.

    Args:
        store: Хранилище масок
        scene_id: Идентификатор сцены
        y_hat: Предсказанная плотность для сцены
        ann: Аннотация сцены
        cfg: Параметры промпта
        epoch: Номер текущей эпохи (с нуля)

    Returns:
        TargetStore: То же хранилище
    """
    lock = store.lock_for(scene_id)
    if epoch < cfg.kappa:
        return store

    m_K = store.context_cache.get_or_compute(
        context_cache_key(ann, cfg.K), lambda: context_mask(ann, cfg.K)
    )
    with lock:
        current = store.get(scene_id)
        updated = online_prompt(current, y_hat, m_K, cfg.tau_pred)
        store.replace(scene_id, updated)
    logger.debug("Эпоха %d: маска сцены %s обновлена, пикселей %d -> %d",
                 epoch, scene_id, int(current.sum()), int(updated.sum()))
    return store
