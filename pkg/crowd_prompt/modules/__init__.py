"""
Модули предметной области: геометрия масок, цели, подсказки, потери.
"""

from crowd_prompt.modules.cache import ContextMaskCache
from crowd_prompt.modules.statistics import MetricsLog, EvalResult, EpochRecord
from crowd_prompt.modules.factory import VariantFactory, VariantSpec
from crowd_prompt.modules.errors import CrowdPromptError
from crowd_prompt.modules.constants import *

__all__ = [
    "ContextMaskCache",
    "MetricsLog",
    "EvalResult",
    "EpochRecord",
    "VariantFactory",
    "VariantSpec",
    "CrowdPromptError"
]
