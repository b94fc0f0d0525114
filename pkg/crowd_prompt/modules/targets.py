"""
Построение обучающих целей из аннотаций: гауссовы карты плотности,
точечные псевдомаски, карты сегментации по боксам и шум боксов.
"""

import math
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from crowd_prompt.modules.constants import DEFAULT_KERNEL_SIZE, DEFAULT_KERNEL_SIGMA, ERROR_MESSAGES
from crowd_prompt.modules.errors import AnnotationBoundsError, MissingBoxesError
from crowd_prompt.modules.geometry import Point2, binarize, dilate_disk


class HeadBox(BaseModel):
    """Бокс головы: левый верхний и правый нижний углы (включительно)."""
    model_config = ConfigDict(frozen=True)

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @model_validator(mode="after")
    def _ordered(self) -> "HeadBox":
        values = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("координаты бокса должны быть конечными")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError("x_min ≤ x_max и y_min ≤ y_max")
        return self

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def contains(self, p: Point2) -> bool:
        """Точка внутри бокса (границы включены)."""
        return self.x_min <= p.x <= self.x_max and self.y_min <= p.y <= self.y_max


class SceneAnnotation(BaseModel):
    """Аннотация изображения: точки и, при наличии, боксы голов."""
    model_config = ConfigDict(frozen=True)

    scene_id: str = "scene"
    width: int = Field(ge=1)
    height: int = Field(ge=1)
    points: List[Point2] = Field(default_factory=list)
    boxes: Optional[List[HeadBox]] = None

    @model_validator(mode="after")
    def _parallel_boxes(self) -> "SceneAnnotation":
        if self.boxes is not None and len(self.boxes) != len(self.points):
            raise ValueError(
                f"число боксов ({len(self.boxes)}) не равно числу точек ({len(self.points)})"
            )
        return self

    def check_bounds(self) -> None:
        """
        Проверить, что все точки лежат внутри изображения.

        Raises:
            AnnotationBoundsError: Если точка вне [0, width) × [0, height)
        """
        for index, p in enumerate(self.points):
            if not (0 <= p.x < self.width and 0 <= p.y < self.height):
                raise AnnotationBoundsError(
                    ERROR_MESSAGES["POINT_OUT_OF_BOUNDS"].format(
                        index=index, scene=self.scene_id, width=self.width,
                        height=self.height, x=p.x, y=p.y
                    ),
                    scene_id=self.scene_id,
                    field=f"points[{index}]"
                )

    @property
    def shape(self) -> tuple:
        """Форма сеток сцены (height, width)."""
        return self.height, self.width


class KernelSpec(BaseModel):
    """Параметры гауссова ядра."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    size: int = DEFAULT_KERNEL_SIZE
    sigma: float = DEFAULT_KERNEL_SIGMA

    @field_validator("size")
    @classmethod
    def _odd(cls, value: int) -> int:
        if value < 1 or value % 2 == 0:
            raise ValueError("размер ядра должен быть нечетным и ≥ 1")
        return value

    @field_validator("sigma")
    @classmethod
    def _positive(cls, value: float) -> float:
        if not value > 0:
            raise ValueError("sigma должна быть положительной")
        return value


def gaussian_kernel(spec: KernelSpec) -> np.ndarray:
    """
    Нормированное гауссово ядро size×size.

    Args:
        spec: Параметры ядра

    Returns:
        np.ndarray: Ядро с суммой 1
    """
    c = (spec.size - 1) / 2.0
    i, j = np.mgrid[0:spec.size, 0:spec.size]
    kernel = np.exp(-((i - c) ** 2 + (j - c) ** 2) / (2.0 * spec.sigma ** 2))
    return kernel / kernel.sum()


def _clip_pixel(p: Point2, width: int, height: int) -> tuple:
    px, py = p.pixel()
    return min(max(px, 0), width - 1), min(max(py, 0), height - 1)


def density_from_points(ann: SceneAnnotation, spec: KernelSpec) -> np.ndarray:
    """
    Карта плотности: сумма ядер в округленных точках аннотации.

    Ядро, обрезанное границей изображения, перенормируется, поэтому каждая
    точка вносит массу ровно 1.

    Args:
        ann: Аннотация сцены
        spec: Параметры ядра

    Returns:
        np.ndarray: Карта плотности (height, width)
    """
    ann.check_bounds()
    kernel = gaussian_kernel(spec)
    half = spec.size // 2
    density = np.zeros(ann.shape, dtype=np.float64)
    for p in ann.points:
        px, py = _clip_pixel(p, ann.width, ann.height)
        y0, y1 = max(py - half, 0), min(py + half + 1, ann.height)
        x0, x1 = max(px - half, 0), min(px + half + 1, ann.width)
        window = kernel[y0 - (py - half):y1 - (py - half), x0 - (px - half):x1 - (px - half)]
        density[y0:y1, x0:x1] += window / window.sum()
    return density


def point_pseudo_mask(ann: SceneAnnotation, spec: KernelSpec, r: float) -> np.ndarray:
    """Точечная псевдомаска: дилатация бинаризованной карты плотности."""
    return dilate_disk(binarize(density_from_points(ann, spec), 0.0), r)


def box_seg_map(ann: SceneAnnotation) -> np.ndarray:
    """
    Карта сегментации по боксам: объединение областей всех боксов.

    Args:
        ann: Аннотация с боксами

    Returns:
        np.ndarray: Бинарная маска (height, width)
    """
    if ann.boxes is None:
        raise MissingBoxesError(
            ERROR_MESSAGES["MISSING_BOXES"].format(scene=ann.scene_id),
            scene_id=ann.scene_id, field="boxes"
        )
    ys, xs = np.mgrid[0:ann.height, 0:ann.width]
    mask = np.zeros(ann.shape, dtype=bool)
    for box in ann.boxes:
        mask |= (xs >= box.x_min) & (xs <= box.x_max) & (ys >= box.y_min) & (ys <= box.y_max)
    return mask


def perturb_boxes(ann: SceneAnnotation, alpha: float, seed: int) -> SceneAnnotation:
    """
    Сдвинуть каждый бокс на равномерный шум в пределах ±alpha·высоты бокса.

    Бокс переносится целиком и остается внутри изображения; точки не меняются.

    Args:
        ann: Аннотация с боксами
        alpha: Доля высоты бокса, 0 ≤ alpha ≤ 0.5
        seed: Зерно генератора

    Returns:
        SceneAnnotation: Новая аннотация
    """
    if not 0.0 <= alpha <= 0.5:
        raise ValueError(f"alpha должна лежать в [0, 0.5]: {alpha}")
    if ann.boxes is None:
        raise MissingBoxesError(
            ERROR_MESSAGES["MISSING_BOXES"].format(scene=ann.scene_id),
            scene_id=ann.scene_id, field="boxes"
        )
    if alpha == 0.0:
        return ann
    rng = np.random.default_rng(seed)
    boxes = []
    for box in ann.boxes:
        h = box.height
        dx, dy = rng.uniform(-alpha * h, alpha * h, size=2) if h > 0 else (0.0, 0.0)
        dx = min(max(dx, -box.x_min), (ann.width - 1) - box.x_max)
        dy = min(max(dy, -box.y_min), (ann.height - 1) - box.y_max)
        boxes.append(HeadBox(
            x_min=box.x_min + dx, y_min=box.y_min + dy,
            x_max=box.x_max + dx, y_max=box.y_max + dy
        ))
    return ann.model_copy(update={"boxes": boxes})
