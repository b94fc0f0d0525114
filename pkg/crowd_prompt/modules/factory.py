"""
Реестр вариантов обучения (строки таблицы абляции).
"""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict

from crowd_prompt.modules.constants import (
    ABLATION_ORDER, VARIANT_ALIASES, VARIANT_DISPLAY_NAMES, VARIANT_FLAGS
)
from crowd_prompt.modules.errors import VariantError


class VariantSpec(BaseModel):
    """Набор включенных компонентов обучения."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: Optional[str] = None
    use_segmenter: bool = True
    use_offline_prompt: bool = True
    use_online_prompt: bool = True
    use_context_loss: bool = True

    def inconsistencies(self) -> List[str]:
        """Список нарушенных ограничений флагов."""
        problems = []
        if self.use_online_prompt and not self.use_offline_prompt:
            problems.append("online промпт требует offline промпт")
        if not self.use_segmenter:
            if self.use_offline_prompt or self.use_online_prompt:
                problems.append("точечный промпт требует сегментатор")
            if self.use_context_loss:
                problems.append("контекстная потеря требует сегментатор")
        return problems

    def check(self) -> "VariantSpec":
        """
        Проверить согласованность флагов.

        Raises:
            VariantError: Флаги несогласованы
        """
        problems = self.inconsistencies()
        if problems:
            raise VariantError.from_template("INCONSISTENT_FLAGS", details="; ".join(problems))
        return self

    @property
    def display_name(self) -> str:
        return VARIANT_DISPLAY_NAMES.get(self.name or "", self.name or "custom")


class VariantFactory:
    """Фабрика вариантов обучения."""

    # Реестр вариантов: имя -> (сегментатор, offline, online, context loss)
    _variants_registry: Dict[str, tuple] = dict(VARIANT_FLAGS)

    @classmethod
    def register_variant(cls, name: str, spec: VariantSpec) -> None:
        """
        Зарегистрировать новый вариант.

        Args:
            name: Имя варианта
            spec: Флаги варианта
        """
        spec.check()
        cls._variants_registry[name] = (
            spec.use_segmenter, spec.use_offline_prompt,
            spec.use_online_prompt, spec.use_context_loss
        )

    @classmethod
    def get_available_variants(cls) -> List[str]:
        """
        Получить список вариантов: сначала строки таблицы абляции.

        Returns:
            List[str]: Имена вариантов
        """
        extra = [name for name in cls._variants_registry if name not in ABLATION_ORDER]
        return [name for name in ABLATION_ORDER if name in cls._variants_registry] + extra

    @classmethod
    def resolve_name(cls, name: str) -> str:
        """Каноническое имя варианта с учетом псевдонимов."""
        canonical = VARIANT_ALIASES.get(name, name)
        if canonical not in cls._variants_registry:
            raise VariantError.from_template(
                "UNKNOWN_VARIANT", variant=name,
                available=", ".join(cls.get_available_variants())
            )
        return canonical

    @classmethod
    def is_known(cls, name: str) -> bool:
        return VARIANT_ALIASES.get(name, name) in cls._variants_registry

    @classmethod
    def create_variant(cls, name: str) -> VariantSpec:
        """
        Создать вариант по имени или псевдониму.

        Args:
            name: Имя варианта (reg, rsg, p_dag, ..., или p†, ‡, full)

        Returns:
            VariantSpec: Флаги варианта

        Raises:
            VariantError: Неизвестное имя
        """
        canonical = cls.resolve_name(name)
        segmenter, offline, online, context = cls._variants_registry[canonical]
        return VariantSpec(
            name=canonical,
            use_segmenter=segmenter,
            use_offline_prompt=offline,
            use_online_prompt=online,
            use_context_loss=context
        )

    @classmethod
    def validate_variant(cls, spec: VariantSpec) -> List[str]:
        """
        Валидировать вариант.

        Args:
            spec: Флаги варианта

        Returns:
            List[str]: Список ошибок валидации
        """
        errors = list(spec.inconsistencies())
        if spec.name is not None and not cls.is_known(spec.name):
            errors.append(f"Вариант '{spec.name}' не найден в реестре")
        return errors

    @classmethod
    def get_variant_info(cls, name: str) -> Optional[Dict[str, Any]]:
        """
        Получить информацию о варианте.

        Args:
            name: Имя варианта

        Returns:
            Optional[Dict[str, Any]]: Флаги и отображаемое имя
        """
        if not cls.is_known(name):
            return None
        spec = cls.create_variant(name)
        info = spec.model_dump()
        info["display_name"] = spec.display_name
        return info
