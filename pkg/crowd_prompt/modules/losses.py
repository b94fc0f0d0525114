"""
Функции потерь обучения: MSE плотности, бинарная кросс-энтропия сегментатора,
контекстная потеря (точная метрика и дифференцируемая форма) и общая
взвешенная потеря.

Все функции чистые и возвращают градиент по предсказанию вместе со значением.
"""

from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from crowd_prompt.modules.constants import (
    BCE_EPSILON, DEFAULT_LAMBDA_C, DEFAULT_LAMBDA_D, DEFAULT_LAMBDA_S, DEFAULT_TAU_MASK
)
from crowd_prompt.modules.geometry import binarize, check_same_shape


class LossWeights(BaseModel):
    """Веса слагаемых общей потери."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    lambda_d: float = Field(default=DEFAULT_LAMBDA_D, ge=0.0)
    lambda_s: float = Field(default=DEFAULT_LAMBDA_S, ge=0.0)
    lambda_c: float = Field(default=DEFAULT_LAMBDA_C, ge=0.0)


class LossReport(BaseModel):
    """Значения слагаемых, общая потеря и градиенты по выходам сети."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    l_den: float
    l_seg: float
    l_con: float
    total: float
    grad_y_hat: np.ndarray
    grad_m_hat: np.ndarray


def loss_den(y_hat: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Среднеквадратичная ошибка карты плотности.

    Args:
        y_hat: Предсказанная плотность
        y: Целевая плотность

    Returns:
        Tuple[float, np.ndarray]: Значение и градиент по y_hat
    """
    check_same_shape(y_hat, y)
    diff = np.asarray(y_hat, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def loss_seg(m_hat: np.ndarray, m: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Бинарная кросс-энтропия сегментатора (оба слагаемых).

    Вероятности ограничиваются отрезком [ε, 1−ε]; за его пределами градиент
    равен нулю.

    Args:
        m_hat: Предсказанные вероятности
        m: Целевая бинарная маска

    Returns:
        Tuple[float, np.ndarray]: Значение и градиент по m_hat
    """
    check_same_shape(m_hat, m)
    p = np.asarray(m_hat, dtype=np.float64)
    t = np.asarray(m, dtype=np.float64)
    clamped = np.clip(p, BCE_EPSILON, 1.0 - BCE_EPSILON)
    n = p.size
    value = -np.mean(t * np.log(clamped) + (1.0 - t) * np.log(1.0 - clamped))
    grad = (-t / clamped + (1.0 - t) / (1.0 - clamped)) / n
    inside = (p >= BCE_EPSILON) & (p <= 1.0 - BCE_EPSILON)
    return float(value), np.where(inside, grad, 0.0)


def con_metric(y_hat: np.ndarray, m_hat: np.ndarray,
               tau_pred: float, tau_mask: float = DEFAULT_TAU_MASK) -> float:
    """
    Контекстная потеря в исходной бинаризованной форме:
    −Σ(B(ŷ) ∩ B(m̂)) / Σ B(ŷ).

    Args:
        y_hat: Предсказанная плотность
        m_hat: Предсказанные вероятности маски
        tau_pred: Порог плотности
        tau_mask: Порог маски

    Returns:
        float: Значение в [−1, 0]; 0, если B(ŷ) пуста
    """
    check_same_shape(y_hat, m_hat)
    by = binarize(y_hat, tau_pred)
    count = int(by.sum())
    if count == 0:
        return 0.0
    inside = int(np.logical_and(by, binarize(m_hat, tau_mask)).sum())
    return -inside / count


def loss_con(y_hat: np.ndarray, m_hat: np.ndarray,
             tau_mask: float = DEFAULT_TAU_MASK) -> Tuple[float, np.ndarray]:
    """
    Дифференцируемая контекстная потеря: −Σ(ŷ ⊙ B(m̂)) / Σŷ.

    B(m̂) считается константой, градиент в сегментатор не идет.

    Args:
        y_hat: Предсказанная плотность (неотрицательная)
        m_hat: Предсказанные вероятности маски
        tau_mask: Порог маски

    Returns:
        Tuple[float, np.ndarray]: Значение и градиент по y_hat
    """
    check_same_shape(y_hat, m_hat)
    y = np.asarray(y_hat, dtype=np.float64)
    total = float(y.sum())
    if total <= 0.0:
        return 0.0, np.zeros_like(y)
    b = binarize(m_hat, tau_mask).astype(np.float64)
    inside = float((y * b).sum())
    # d(−A/T)/dŷ_i = (A − b_i·T) / T²
    grad = (inside - b * total) / (total * total)
    return -inside / total, grad


def total_loss(y_hat: np.ndarray, y: np.ndarray, m_hat: np.ndarray, m: Optional[np.ndarray],
               w: LossWeights, tau_mask: float = DEFAULT_TAU_MASK) -> LossReport:
    """
    Общая потеря λd·L_den + λs·L_seg + λc·L_con.

    Слагаемое с нулевым весом не вычисляется: его значение и вклад в
    градиент равны нулю.

    Args:
        y_hat: Предсказанная плотность
        y: Целевая плотность
        m_hat: Предсказанные вероятности маски
        m: Целевая маска (может отсутствовать при λs = 0)
        w: Веса слагаемых
        tau_mask: Порог маски для контекстной потери

    Returns:
        LossReport: Слагаемые, сумма и градиенты
    """
    check_same_shape(y_hat, m_hat)
    grad_y = np.zeros(np.shape(y_hat), dtype=np.float64)
    grad_m = np.zeros(np.shape(m_hat), dtype=np.float64)

    l_den = l_seg = l_con = 0.0
    if w.lambda_d > 0:
        l_den, g = loss_den(y_hat, y)
        grad_y += w.lambda_d * g
    if w.lambda_s > 0:
        if m is None:
            raise ValueError("Для L_seg нужна целевая маска")
        l_seg, g = loss_seg(m_hat, m)
        grad_m += w.lambda_s * g
    if w.lambda_c > 0:
        l_con, g = loss_con(y_hat, m_hat, tau_mask)
        grad_y += w.lambda_c * g

    return LossReport(
        l_den=l_den,
        l_seg=l_seg,
        l_con=l_con,
        total=w.lambda_d * l_den + w.lambda_s * l_seg + w.lambda_c * l_con,
        grad_y_hat=grad_y,
        grad_m_hat=grad_m
    )
