"""
Константы и значения по умолчанию Crowd Prompt.
"""

from enum import Enum
from typing import Dict, Any

# Информация о версии и сервисе
SERVICE_INFO = {
    "name": "Crowd Prompt",
    "version": "1.0.0",
    "description": "Взаимное обучение сегментатора и регрессора плотности для подсчета толпы",
    "author": "Crowd Prompt Team",
    "license": "MIT"
}


class Category(Enum):
    """Категории ошибок командной строки."""
    INTERNAL = "internal"
    CONFIG = "config"
    ANNOTATION = "annotation"
    DATA = "data"
    IO = "io"
    VARIANT = "variant"


# Коды завершения по категориям
EXIT_CODES = {
    Category.INTERNAL: 1,
    Category.CONFIG: 2,
    Category.ANNOTATION: 3,
    Category.DATA: 4,
    Category.IO: 5,
    Category.VARIANT: 6
}


class PseudoSource(Enum):
    """Источник псевдомасок m_p."""
    BOX = "box"
    POINT = "point"
    EMPTY = "empty"


# Строки таблицы абляции: (сегментатор, offline, online, context loss)
VARIANT_FLAGS = {
    "reg": (False, False, False, False),
    "rsg": (True, False, False, False),
    "p_dag": (True, True, False, False),
    "p_ddag": (True, True, True, False),
    "c_dag": (True, False, False, True),
    "dag": (True, True, False, True),
    "ddag": (True, True, True, True)
}

# Порядок строк таблицы абляции
ABLATION_ORDER = ["reg", "rsg", "p_dag", "p_ddag", "c_dag", "dag", "ddag"]

# Альтернативные имена вариантов
VARIANT_ALIASES = {
    "p†": "p_dag",
    "p‡": "p_ddag",
    "c†": "c_dag",
    "†": "dag",
    "‡": "ddag",
    "full": "ddag"
}

# Отображаемые имена вариантов
VARIANT_DISPLAY_NAMES = {
    "reg": "reg",
    "rsg": "rsg",
    "p_dag": "p†",
    "p_ddag": "p‡",
    "c_dag": "c†",
    "dag": "†",
    "ddag": "‡"
}

# Параметры метода по умолчанию
DEFAULT_K = 3
# Эпоха начала online промпта в масштабе синтетического стенда
DEFAULT_KAPPA = 20
DEFAULT_TAU_PRED = 1e-3
DEFAULT_TAU_MASK = 0.5
DEFAULT_LAMBDA_D = 1.0
DEFAULT_LAMBDA_S = 0.5
DEFAULT_LAMBDA_C = 0.5
DEFAULT_KERNEL_SIZE = 15
DEFAULT_KERNEL_SIGMA = DEFAULT_KERNEL_SIZE / 4.0
DEFAULT_LEARNING_RATE = 1e-4
DEFAULT_BATCH_SIZE = 16

# Начальные значения головы плотности
DENSITY_HEAD_WEIGHT_SCALE = 0.1
DENSITY_HEAD_BIAS_INIT = 1e-2

# Параметры Adam
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

# Численные допуски
CONTAINMENT_TOLERANCE = 1e-9
BCE_EPSILON = 1e-7

# Сетка шума по умолчанию (доля высоты бокса)
DEFAULT_NOISE_ALPHAS = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]

# Сетка весов потерь по умолчанию (λd, λs, λc)
DEFAULT_WEIGHT_GRID = [
    [1.0, 0.0, 0.0],
    [1.0, 1.0, 0.0],
    [1.0, 1.0, 1.0],
    [1.0, 0.5, 1.0],
    [1.0, 1.0, 0.5],
    [1.0, 0.5, 0.5]
]

# Формат файлов
ANNOTATION_SCHEMA_VERSION = 1
CHECKPOINT_MAGIC = "CROWDPROMPT-CKPT"
CHECKPOINT_VERSION = 1
MANIFEST_FILE = "manifest.json"
METRICS_FILE = "metrics.jsonl"

# Поля записи метрик эпохи
METRIC_FIELDS = ["epoch", "l_den", "l_seg", "l_con", "train_mae", "test_mae", "test_rmse"]

# Сообщения об ошибках
ERROR_MESSAGES = {
    "DIMENSION_MISMATCH": "Размеры сеток не совпадают: {left} и {right}",
    "EMPTY_POINTS": "Список точек пуст",
    "ANCHOR_NOT_FOUND": "Опорная точка {anchor} отсутствует в списке точек",
    "POINT_OUT_OF_BOUNDS": "Точка {index} сцены '{scene}' вне изображения {width}x{height}: ({x}, {y})",
    "MISSING_BOXES": "У сцены '{scene}' нет боксов голов",
    "UNKNOWN_SCENE": "Сцена '{scene}' не инициализирована в хранилище масок",
    "UNKNOWN_VARIANT": "Неизвестный вариант '{variant}'. Доступные: {available}",
    "INCONSISTENT_FLAGS": "Несогласованные флаги варианта: {details}",
    "MISSING_PSEUDO_MASKS": "Вариант '{variant}' использует сегментатор, но псевдомаски не заданы для сцены '{scene}'",
    "STALE_TRACE": "Трасса прямого прохода устарела: версия {trace} != {state}",
    "PLACEMENT_FAILED": "Не удалось разместить голову {index} за {attempts} попыток",
    "INVALID_PLAN": "Некорректный план каналов: {details}",
    "CONFIG_INVALID": "Некорректная конфигурация: {details}",
    "CONFIG_PARSE": "Ошибка разбора конфигурации {path}: {details}",
    "ANNOTATION_PARSE": "Ошибка разбора файла аннотаций {path}: {details}",
    "ANNOTATION_SCHEMA": "Нарушение схемы в сцене '{scene}', поле {field}: {details}",
    "NON_FINITE": "Сетка содержит нечисловые значения (NaN/inf)",
    "NOT_BINARY": "Сетка не бинарная",
    "FORMAT_INVALID": "Некорректный файл {path}: {details}",
    "SHAPE_MISMATCH": "Форма параметра '{name}' не совпадает: {left} и {right}"
}
