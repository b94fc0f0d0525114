"""
Основная логика Crowd Prompt: обучение, эксперименты, конфигурация.
"""

from .manager import ExperimentManager
from .config import ConfigManager, RunConfig

__all__ = [
    "ExperimentManager",
    "ConfigManager",
    "RunConfig"
]
