"""
Иерархия ошибок Crowd Prompt.
"""

from typing import Optional
from crowd_prompt.modules.constants import Category, EXIT_CODES, ERROR_MESSAGES


class CrowdPromptError(Exception):
    """Базовая ошибка с категорией для командной строки."""

    category: Category = Category.INTERNAL

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    @property
    def exit_code(self) -> int:
        """Код завершения процесса для категории ошибки."""
        return EXIT_CODES[self.category]

    @classmethod
    def from_template(cls, key: str, **kwargs) -> "CrowdPromptError":
        """Создать ошибку по шаблону из ERROR_MESSAGES."""
        return cls(ERROR_MESSAGES[key].format(**kwargs))


class DimensionMismatchError(CrowdPromptError, ValueError):
    """Сетки разных размеров: ошибка вызывающего кода."""
    category = Category.DATA


class ConfigError(CrowdPromptError):
    """Ошибка конфигурации."""
    category = Category.CONFIG


class AnnotationError(CrowdPromptError):
    """Ошибка аннотаций с указанием сцены и поля."""

    category = Category.ANNOTATION

    def __init__(self, message: str, scene_id: Optional[str] = None, field: Optional[str] = None):
        super().__init__(message)
        self.scene_id = scene_id
        self.field = field


class AnnotationParseError(AnnotationError):
    """Файл аннотаций не является корректным JSON."""


class AnnotationSchemaError(AnnotationError):
    """Файл аннотаций нарушает схему."""


class AnnotationBoundsError(AnnotationError, ValueError):
    """Точка вне границ изображения."""


class MissingBoxesError(AnnotationError, ValueError):
    """Операция требует боксы голов, а их нет."""


class UnknownSceneError(CrowdPromptError, KeyError):
    """Сцена не найдена в хранилище целевых масок."""
    category = Category.DATA

    def __str__(self) -> str:
        return self.message


class VariantError(CrowdPromptError, ValueError):
    """Неизвестный вариант или несогласованные флаги."""
    category = Category.VARIANT


class StaleTraceError(CrowdPromptError, RuntimeError):
    """Трасса прямого прохода не соответствует состоянию модели."""
    category = Category.INTERNAL


class PlacementError(CrowdPromptError, RuntimeError):
    """Генератор сцен не смог разместить головы."""
    category = Category.DATA


class FormatError(CrowdPromptError, ValueError):
    """Некорректный файл растра или контрольной точки."""
    category = Category.IO
