"""
Примитивы пиксельной сетки: бинаризация, алгебра масок, дилатация диском,
пространственный K-NN, минимальная охватывающая окружность и её растеризация.

Сетки представлены массивами numpy формы (height, width): плотности и
вероятности в float64, бинарные маски в bool.
"""

import math
import random
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy import ndimage

from crowd_prompt.modules.constants import CONTAINMENT_TOLERANCE, ERROR_MESSAGES
from crowd_prompt.modules.errors import DimensionMismatchError


class Point2(BaseModel):
    """Точка с субпиксельными координатами."""
    model_config = ConfigDict(frozen=True)

    x: float
    y: float

    @field_validator("x", "y")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("координата должна быть конечной")
        return value

    def distance(self, other: "Point2") -> float:
        """Евклидово расстояние до другой точки."""
        return math.hypot(self.x - other.x, self.y - other.y)

    def pixel(self) -> tuple:
        """Ближайший пиксель (x, y), округление floor(v + 0.5)."""
        return int(math.floor(self.x + 0.5)), int(math.floor(self.y + 0.5))


class Circle(BaseModel):
    """Окружность на плоскости изображения."""
    model_config = ConfigDict(frozen=True)

    center: Point2
    radius: float

    @field_validator("radius")
    @classmethod
    def _non_negative(cls, value: float) -> float:
        if not value >= 0:
            raise ValueError("радиус должен быть неотрицательным")
        return value

    def covers(self, p: Point2) -> bool:
        """Точка внутри окружности с допуском 1e-9."""
        return self.center.distance(p) <= self.radius + CONTAINMENT_TOLERANCE


def check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    """Проверить совпадение размеров двух сеток."""
    if a.shape != b.shape:
        raise DimensionMismatchError.from_template(
            "DIMENSION_MISMATCH", left=a.shape, right=b.shape
        )


def binarize(g: np.ndarray, tau: float = 0.0) -> np.ndarray:
    """
    Бинаризовать сетку порогом.

    Args:
        g: Сетка плотности или вероятностей
        tau: Порог (пиксель переднего плана, если значение строго больше)

    Returns:
        np.ndarray: Бинарная маска тех же размеров
    """
    return np.asarray(g) > tau


def mask_union(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Попиксельное ИЛИ двух масок."""
    check_same_shape(a, b)
    return np.logical_or(a, b)


def mask_intersect(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Попиксельное И двух масок."""
    check_same_shape(a, b)
    return np.logical_and(a, b)


def disk_offsets(r: float) -> np.ndarray:
    """
    Структурный элемент диска радиуса r.

    Args:
        r: Радиус в пикселях

    Returns:
        np.ndarray: Квадратная бинарная маска смещений с dx² + dy² ≤ r²
    """
    half = int(math.floor(r))
    dy, dx = np.mgrid[-half:half + 1, -half:half + 1]
    return dx * dx + dy * dy <= r * r + CONTAINMENT_TOLERANCE


def dilate_disk(m: np.ndarray, r: float) -> np.ndarray:
    """
    Дилатация маски диском радиуса r с обрезкой на границах.

    Args:
        m: Бинарная маска
        r: Радиус (r ≥ 0)

    Returns:
        np.ndarray: Маска, где пиксель установлен, если в радиусе r есть пиксель m
    """
    if r < 0:
        raise ValueError(f"Радиус дилатации должен быть неотрицательным: {r}")
    mask = np.asarray(m, dtype=bool)
    if r < 1 or not mask.any():
        return mask.copy()
    return ndimage.binary_dilation(mask, structure=disk_offsets(r), border_value=0)


def k_nearest(points: Sequence[Point2], anchor: Point2, K: int) -> List[Point2]:
    """
    Найти K ближайших аннотированных точек к опорной.

    Опорная точка исключается (одно её вхождение), равные расстояния
    упорядочиваются по (y, x).

    Args:
        points: Все точки сцены
        anchor: Опорная точка из списка
        K: Число соседей

    Returns:
        List[Point2]: min(K, |points| - 1) ближайших точек
    """
    if not points:
        raise ValueError(ERROR_MESSAGES["EMPTY_POINTS"])
    if K < 1:
        raise ValueError(f"K должно быть не меньше 1: {K}")
    try:
        anchor_index = next(i for i, p in enumerate(points) if p == anchor)
    except StopIteration:
        raise ValueError(ERROR_MESSAGES["ANCHOR_NOT_FOUND"].format(anchor=(anchor.x, anchor.y)))
    return [points[i] for i in k_nearest_indices(points, anchor_index, K)]


def k_nearest_indices(points: Sequence[Point2], anchor_index: int, K: int) -> List[int]:
    """Индексы K ближайших соседей точки с номером anchor_index."""
    xs = np.array([p.x for p in points], dtype=np.float64)
    ys = np.array([p.y for p in points], dtype=np.float64)
    d2 = (xs - xs[anchor_index]) ** 2 + (ys - ys[anchor_index]) ** 2
    # np.lexsort сортирует по последнему ключу первым
    order = np.lexsort((xs, ys, d2))
    neighbours = [int(i) for i in order if i != anchor_index]
    return neighbours[:K]


def _diameter_circle(a: Point2, b: Point2) -> Circle:
    center = Point2(x=(a.x + b.x) / 2.0, y=(a.y + b.y) / 2.0)
    return Circle(center=center, radius=max(center.distance(a), center.distance(b)))


def _circumcircle(a: Point2, b: Point2, c: Point2) -> Optional[Circle]:
    # Сдвиг к центру ограничивающего прямоугольника для устойчивости
    ox = (min(a.x, b.x, c.x) + max(a.x, b.x, c.x)) / 2.0
    oy = (min(a.y, b.y, c.y) + max(a.y, b.y, c.y)) / 2.0
    ax, ay = a.x - ox, a.y - oy
    bx, by = b.x - ox, b.y - oy
    cx, cy = c.x - ox, c.y - oy
    d = (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by)) * 2.0
    if d == 0.0:
        return None
    a2, b2, c2 = ax * ax + ay * ay, bx * bx + by * by, cx * cx + cy * cy
    x = ox + (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d
    y = oy + (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d
    center = Point2(x=x, y=y)
    return Circle(center=center, radius=max(center.distance(a), center.distance(b), center.distance(c)))


def _cross(a: Point2, b: Point2, c: Point2) -> float:
    return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)


def _circle_with_two(points: Sequence[Point2], p: Point2, q: Point2) -> Circle:
    base = _diameter_circle(p, q)
    left: Optional[Circle] = None
    right: Optional[Circle] = None
    for r in points:
        if base.covers(r):
            continue
        side = _cross(p, q, r)
        circle = _circumcircle(p, q, r)
        if circle is None:
            continue
        if side > 0.0 and (left is None or _cross(p, q, circle.center) > _cross(p, q, left.center)):
            left = circle
        elif side < 0.0 and (right is None or _cross(p, q, circle.center) < _cross(p, q, right.center)):
            right = circle
    if left is None and right is None:
        return base
    if left is None:
        return right
    if right is None:
        return left
    return left if left.radius <= right.radius else right


def _circle_with_one(points: Sequence[Point2], p: Point2) -> Circle:
    circle = Circle(center=p, radius=0.0)
    for i, q in enumerate(points):
        if circle.covers(q):
            continue
        if circle.radius == 0.0:
            circle = _diameter_circle(p, q)
        else:
            circle = _circle_with_two(points[:i + 1], p, q)
    return circle


def min_enclosing_circle(points: Sequence[Point2], seed: int = 0) -> Circle:
    """
    Минимальная окружность, содержащая все точки (алгоритм Вельцля,
    итеративная форма с ожидаемым линейным временем).

    Args:
        points: Непустой список точек
        seed: Зерно перемешивания (результат от него не зависит)

    Returns:
        Circle: Минимальная охватывающая окружность
    """
    if not points:
        raise ValueError(ERROR_MESSAGES["EMPTY_POINTS"])
    shuffled = list(points)
    random.Random(seed).shuffle(shuffled)
    circle: Optional[Circle] = None
    for i, p in enumerate(shuffled):
        if circle is None or not circle.covers(p):
            circle = _circle_with_one(shuffled[:i + 1], p)
    return circle


def rasterize_circle(c: Circle, width: int, height: int) -> np.ndarray:
    """
    Растеризовать круг на сетке width×height.

    Args:
        c: Окружность
        width: Ширина сетки
        height: Высота сетки

    Returns:
        np.ndarray: Маска пикселей (x, y) с расстоянием до центра ≤ радиуса
    """
    if width < 1 or height < 1:
        raise ValueError(f"Размеры сетки должны быть положительными: {width}x{height}")
    ys, xs = np.mgrid[0:height, 0:width]
    d2 = (xs - c.center.x) ** 2 + (ys - c.center.y) ** 2
    return np.sqrt(d2) <= c.radius + CONTAINMENT_TOLERANCE
