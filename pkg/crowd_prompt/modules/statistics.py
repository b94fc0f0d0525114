"""
Метрики подсчета и журналы экспериментов: MAE/RMSE, построчный журнал эпох
и таблицы результатов.
"""

import json
import logging
import math
import threading
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, model_validator

from crowd_prompt.modules.constants import METRIC_FIELDS

logger = logging.getLogger(__name__)


class EvalResult(BaseModel):
    """Ошибки подсчета и пары (предсказано, истинно) по сценам."""
    mae: float
    rmse: float
    counts: List[Tuple[float, float]]

    @model_validator(mode="after")
    def _power_mean(self) -> "EvalResult":
        if self.mae < 0 or self.mae > self.rmse + 1e-12:
            raise ValueError(f"нарушено 0 ≤ MAE ≤ RMSE: {self.mae}, {self.rmse}")
        return self


def count_errors(predicted: Sequence[float], true: Sequence[float]) -> EvalResult:
    """
    MAE и RMSE по парам счетчиков.

    Args:
        predicted: Предсказанные счетчики Ĉᵢ
        true: Истинные счетчики Cᵢ

    Returns:
        EvalResult: Метрики
    """
    if len(predicted) != len(true):
        raise ValueError(f"Списки разной длины: {len(predicted)} и {len(true)}")
    if not predicted:
        raise ValueError("Пустой список сцен для оценки")
    diff = np.asarray(predicted, dtype=np.float64) - np.asarray(true, dtype=np.float64)
    mae = float(np.mean(np.abs(diff)))
    rmse = float(math.sqrt(np.mean(diff * diff)))
    # Равенство MAE = RMSE при постоянной ошибке нарушается только округлением
    rmse = max(rmse, mae)
    return EvalResult(
        mae=mae, rmse=rmse,
        counts=[(float(p), float(t)) for p, t in zip(predicted, true)]
    )


class EpochRecord(BaseModel):
    """Запись журнала за одну эпоху."""
    epoch: int
    l_den: float
    l_seg: float
    l_con: float
    train_mae: float
    test_mae: Optional[float] = None
    test_rmse: Optional[float] = None


class MetricsLog:
    """Журнал метрик: одна JSON-запись на строку, единственный писатель."""

    def __init__(self, path: Optional[Union[str, Path]] = None):
        """
        Инициализация журнала.

        Args:
            path: Файл журнала (None - только в памяти)
        """
        self.path = Path(path) if path else None
        self.records: List[EpochRecord] = []
        self._lock = threading.Lock()
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def append(self, record: EpochRecord) -> None:
        with self._lock:
            self.records.append(record)
            if self.path:
                with open(self.path, "a", encoding="utf-8") as f:
                    f.write(json.dumps(record.model_dump(include=set(METRIC_FIELDS))) + "\n")

    @staticmethod
    def read(path: Union[str, Path]) -> List[EpochRecord]:
        """Прочитать журнал из файла."""
        records = []
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    records.append(EpochRecord(**json.loads(line)))
        return records

    def curve(self, field: str) -> List[Optional[float]]:
        return [getattr(r, field) for r in self.records]


def _format_cell(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table(rows: List[Dict[str, Any]], columns: List[str], path: Union[str, Path]) -> Path:
    """
    Записать таблицу с разделителем табуляцией и строкой заголовка.

    Args:
        rows: Строки таблицы
        columns: Порядок колонок
        path: Путь к файлу

    Returns:
        Path: Путь к записанному файлу
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["\t".join(columns)]
    lines += ["\t".join(_format_cell(row.get(c, "")) for c in columns) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.debug("Таблица %s: %d строк", path, len(rows))
    return path


def read_table(path: Union[str, Path]) -> List[Dict[str, str]]:
    """Прочитать таблицу, записанную write_table (значения строками)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        return []
    header = lines[0].split("\t")
    return [dict(zip(header, line.split("\t"))) for line in lines[1:] if line]
