"""
Кэш контекстных масок m_K.

Маски адресуются ключом из сцены, K и координат точек, поэтому файл кэша
можно переиспользовать между запусками.
"""

import logging
import os
import threading
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import numpy as np

logger = logging.getLogger(__name__)


class ContextMaskCache:
    """Менеджер кэширования контекстных масок."""

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        """
        Инициализация кэша.

        Args:
            config: Конфигурация кэша (enabled, cache_file)
        """
        config = config or {}
        self.config = config
        self.enabled = config.get("enabled", True)
        self.cache_file = config.get("cache_file")

        self._masks: Dict[str, np.ndarray] = {}
        self._hits = 0
        self._misses = 0
        self._lock = threading.Lock()

    def load_cache(self) -> Dict[str, np.ndarray]:
        """
        Загрузить кэш из файла .npz, если он задан и существует.

        Returns:
            Dict[str, np.ndarray]: Маски по ключам
        """
        if not self.enabled or not self.cache_file:
            return self._masks

        with self._lock:
            if os.path.exists(self.cache_file):
                with np.load(self.cache_file) as data:
                    self._masks = {key: data[key].astype(bool) for key in data.files}
                logger.debug("Загружено %d контекстных масок из %s", len(self._masks), self.cache_file)
        return self._masks

    def save_cache(self) -> None:
        """Сохранить кэш в файл .npz."""
        if not self.enabled or not self.cache_file:
            return

        with self._lock:
            Path(self.cache_file).parent.mkdir(parents=True, exist_ok=True)
            np.savez_compressed(self.cache_file, **self._masks)

    def get_or_compute(self, key: str, compute: Callable[[], np.ndarray]) -> np.ndarray:
        """
        Получить маску по ключу, вычислив её при первом обращении.

        Args:
            key: Ключ маски (см. context_cache_key)
            compute: Функция построения маски

        Returns:
            np.ndarray: Контекстная маска
        """
        if not self.enabled:
            return compute()

        with self._lock:
            cached = self._masks.get(key)
            if cached is not None:
                self._hits += 1
                return cached
            self._misses += 1

        mask = compute()
        mask.setflags(write=False)
        with self._lock:
            self._masks.setdefault(key, mask)
            return self._masks[key]

    def clear_cache(self, key: Optional[str] = None) -> None:
        """
        Очистить кэш.

        Args:
            key: Ключ для очистки (если None - очистить весь кэш)
        """
        with self._lock:
            if key:
                self._masks.pop(key, None)
            else:
                self._masks = {}

    def get_cache_info(self) -> Dict[str, Any]:
        """
        Получить информацию о кэше.

        Returns:
            Dict[str, Any]: Информация о кэше
        """
        return {
            "enabled": self.enabled,
            "cache_file": self.cache_file,
            "scenes_count": len(self._masks),
            "hits": self._hits,
            "misses": self._misses
        }
