"""
Файловые форматы: JSON аннотаций, растры PFM (плотность), PGM (маска) и
PPM (наложение плотности и границы маски на изображение).
"""

import json
import logging
import zipfile
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError
from scipy import ndimage

from crowd_prompt.modules.constants import ANNOTATION_SCHEMA_VERSION, ERROR_MESSAGES
from crowd_prompt.modules.errors import AnnotationParseError, AnnotationSchemaError, FormatError
from crowd_prompt.modules.geometry import Point2
from crowd_prompt.modules.targets import HeadBox, SceneAnnotation

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class SceneRecord(BaseModel):
    """Сцена в файле аннотаций."""
    model_config = ConfigDict(extra="forbid")

    id: str
    width: int
    height: int
    points: List[Tuple[float, float]]
    boxes: Optional[List[Tuple[float, float, float, float]]] = None
    split: Optional[Literal["train", "test"]] = None


class AnnotationFile(BaseModel):
    """Файл аннотаций с версией схемы."""
    model_config = ConfigDict(extra="forbid")

    schema_version: int
    scenes: List[SceneRecord]


def _field_path(loc: Sequence) -> str:
    path = ""
    for part in loc:
        path += f"[{part}]" if isinstance(part, int) else (f".{part}" if path else str(part))
    return path


def _io_error(path: PathLike, error: Exception) -> FormatError:
    return FormatError.from_template("FORMAT_INVALID", path=path, details=error)


def read_annotation_file(path: PathLike) -> Tuple[List[SceneAnnotation], Dict[str, str]]:
    """
    Прочитать файл аннотаций вместе с разбиением сцен.

    Args:
        path: Путь к JSON файлу

    Returns:
        Tuple[List[SceneAnnotation], Dict[str, str]]: Сцены и split по идентификаторам

    Raises:
        AnnotationParseError: Файл не является JSON
        AnnotationSchemaError: Нарушение схемы (со сценой и путем поля)
        AnnotationBoundsError: Точка вне изображения
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise AnnotationParseError(ERROR_MESSAGES["ANNOTATION_PARSE"].format(path=path, details=e))
    except OSError as e:
        raise _io_error(path, e)

    try:
        parsed = AnnotationFile.model_validate(raw)
    except ValidationError as e:
        error = e.errors()[0]
        loc = error["loc"]
        scene_id = None
        if len(loc) >= 2 and loc[0] == "scenes" and isinstance(loc[1], int):
            try:
                scene_id = raw["scenes"][loc[1]].get("id")
            except (AttributeError, IndexError, KeyError, TypeError):
                scene_id = None
        field = _field_path(loc)
        raise AnnotationSchemaError(
            ERROR_MESSAGES["ANNOTATION_SCHEMA"].format(scene=scene_id, field=field, details=error["msg"]),
            scene_id=scene_id, field=field
        )

    if parsed.schema_version != ANNOTATION_SCHEMA_VERSION:
        raise AnnotationSchemaError(
            ERROR_MESSAGES["ANNOTATION_SCHEMA"].format(
                scene=None, field="schema_version",
                details=f"поддерживается версия {ANNOTATION_SCHEMA_VERSION}"
            ),
            field="schema_version"
        )

    annotations: List[SceneAnnotation] = []
    splits: Dict[str, str] = {}
    for index, record in enumerate(parsed.scenes):
        try:
            ann = SceneAnnotation(
                scene_id=record.id,
                width=record.width,
                height=record.height,
                points=[Point2(x=x, y=y) for x, y in record.points],
                boxes=None if record.boxes is None else [
                    HeadBox(x_min=b[0], y_min=b[1], x_max=b[2], y_max=b[3]) for b in record.boxes
                ]
            )
        except ValidationError as e:
            error = e.errors()[0]
            field = f"scenes[{index}]" + (f".{_field_path(error['loc'])}" if error["loc"] else "")
            raise AnnotationSchemaError(
                ERROR_MESSAGES["ANNOTATION_SCHEMA"].format(scene=record.id, field=field, details=error["msg"]),
                scene_id=record.id, field=field
            )
        ann.check_bounds()
        annotations.append(ann)
        if record.split is not None:
            splits[record.id] = record.split
    return annotations, splits


def read_annotations(path: PathLike) -> List[SceneAnnotation]:
    """Прочитать и проверить аннотации сцен."""
    return read_annotation_file(path)[0]


def write_annotations(path: PathLike, annotations: Sequence[SceneAnnotation],
                      splits: Optional[Dict[str, str]] = None) -> Path:
    """
    Записать аннотации в JSON схемы версии ANNOTATION_SCHEMA_VERSION.

    Args:
        path: Путь к файлу
        annotations: Сцены
        splits: Разбиение train/test по идентификаторам

    Returns:
        Path: Путь к записанному файлу
    """
    scenes = []
    for ann in annotations:
        record = {
            "id": ann.scene_id,
            "width": ann.width,
            "height": ann.height,
            "points": [[p.x, p.y] for p in ann.points]
        }
        if ann.boxes is not None:
            record["boxes"] = [[b.x_min, b.y_min, b.x_max, b.y_max] for b in ann.boxes]
        if splits and ann.scene_id in splits:
            record["split"] = splits[ann.scene_id]
        scenes.append(record)

    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"schema_version": ANNOTATION_SCHEMA_VERSION, "scenes": scenes}, f, indent=2)
            f.write("\n")
    except OSError as e:
        raise _io_error(path, e)
    return path


def _write_bytes(path: PathLike, header: bytes, payload: bytes) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            f.write(header)
            f.write(payload)
    except OSError as e:
        raise _io_error(path, e)
    return path


def _read_header(path: PathLike, fields: int) -> Tuple[List[str], bytes]:
    """Разобрать заголовок netpbm: fields токенов, затем один пробельный символ."""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise _io_error(path, e)
    tokens: List[str] = []
    pos = 0
    while len(tokens) < fields:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError.from_template("FORMAT_INVALID", path=path, details="обрыв заголовка")
        tokens.append(data[start:pos].decode("ascii", errors="replace"))
    return tokens, data[pos + 1:]


def write_density_pfm(y: np.ndarray, path: PathLike) -> Path:
    """
    Записать плотность в PFM: "Pf", размеры, масштаб -1.0 (little-endian),
    затем строки сверху вниз 32-битными числами.

    Raises:
        FormatError: Нечисловые значения или ошибка записи
    """
    grid = np.asarray(y, dtype=np.float64)
    if grid.ndim != 2:
        raise FormatError.from_template("FORMAT_INVALID", path=path, details=f"ожидалась 2D сетка: {grid.shape}")
    if not np.all(np.isfinite(grid)):
        raise FormatError(ERROR_MESSAGES["NON_FINITE"])
    height, width = grid.shape
    header = f"Pf\n{width} {height}\n-1.0\n".encode("ascii")
    return _write_bytes(path, header, grid.astype("<f4").tobytes())


def read_density_pfm(path: PathLike) -> np.ndarray:
    """Прочитать одноканальный PFM (строки сверху вниз) как float64."""
    (magic, width, height, scale), payload = _read_header(path, 4)
    if magic != "Pf":
        raise FormatError.from_template("FORMAT_INVALID", path=path, details=f"сигнатура {magic}")
    w, h = int(width), int(height)
    dtype = "<f4" if float(scale) < 0 else ">f4"
    if len(payload) != w * h * 4:
        raise FormatError.from_template("FORMAT_INVALID", path=path, details="размер данных")
    return np.frombuffer(payload, dtype=dtype).reshape(h, w).astype(np.float64)


def write_mask_pgm(m: np.ndarray, path: PathLike) -> Path:
    """
    Записать бинарную маску в PGM P5: 0 - фон, 255 - передний план.

    Raises:
        FormatError: Маска не бинарная или ошибка записи
    """
    grid = np.asarray(m)
    if grid.ndim != 2:
        raise FormatError.from_template("FORMAT_INVALID", path=path, details=f"ожидалась 2D сетка: {grid.shape}")
    if grid.dtype != bool and not np.all((grid == 0) | (grid == 1)):
        raise FormatError(ERROR_MESSAGES["NOT_BINARY"])
    height, width = grid.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    return _write_bytes(path, header, (grid.astype(bool).astype(np.uint8) * 255).tobytes())


def read_mask_pgm(path: PathLike) -> np.ndarray:
    """Прочитать 8-битный PGM P5 как бинарную маску (порог - половина maxval)."""
    (magic, width, height, maxval), payload = _read_header(path, 4)
    if magic != "P5" or int(maxval) > 255:
        raise FormatError.from_template("FORMAT_INVALID", path=path, details=f"{magic}, maxval {maxval}")
    w, h = int(width), int(height)
    if len(payload) != w * h:
        raise FormatError.from_template("FORMAT_INVALID", path=path, details="размер данных")
    data = np.frombuffer(payload, dtype=np.uint8).reshape(h, w)
    return data >= (int(maxval) + 1) // 2


def read_ppm(path: PathLike) -> np.ndarray:
    """Прочитать 8-битный PPM P6 как массив (H, W, 3)."""
    (magic, width, height, maxval), payload = _read_header(path, 4)
    if magic != "P6" or int(maxval) > 255:
        raise FormatError.from_template("FORMAT_INVALID", path=path, details=f"{magic}, maxval {maxval}")
    w, h = int(width), int(height)
    if len(payload) != w * h * 3:
        raise FormatError.from_template("FORMAT_INVALID", path=path, details="размер данных")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).copy()


def mask_boundary(m: np.ndarray) -> np.ndarray:
    """Внешняя граница маски: пиксели фона с 4-соседом из маски."""
    mask = np.asarray(m, dtype=bool)
    cross = ndimage.generate_binary_structure(2, 1)
    return ndimage.binary_dilation(mask, structure=cross) & ~mask


def overlay_rgb(image: np.ndarray, y_hat: np.ndarray, m: np.ndarray) -> np.ndarray:
    """
    Наложение: серое изображение, красная шкала плотности, зеленая граница маски.

    Args:
        image: Изображение (C, H, W) или (H, W) в [0, 1]
        y_hat: Плотность (H, W)
        m: Бинарная маска (H, W)

    Returns:
        np.ndarray: RGB (H, W, 3) uint8
    """
    img = np.asarray(image, dtype=np.float64)
    gray = img.mean(axis=0) if img.ndim == 3 else img
    density = np.asarray(y_hat, dtype=np.float64)
    mask = np.asarray(m, dtype=bool)
    if not (gray.shape == density.shape == mask.shape):
        raise FormatError.from_template(
            "FORMAT_INVALID", path="overlay",
            details=f"размеры {gray.shape}, {density.shape}, {mask.shape}"
        )
    gray = np.clip(gray, 0.0, 1.0)
    peak = float(density.max()) if density.size else 0.0
    ramp = np.clip(density / peak, 0.0, 1.0) if peak > 0 else np.zeros_like(density)

    red = gray + (1.0 - gray) * ramp
    rgb = np.stack([red, gray, gray], axis=-1)
    rgb = np.round(rgb * 255.0).astype(np.uint8)
    rgb[mask_boundary(mask)] = (0, 255, 0)
    return rgb


def render_overlay(image: np.ndarray, y_hat: np.ndarray, m: np.ndarray, path: PathLike) -> Path:
    """Записать наложение в PPM P6 того же размера, что и вход."""
    rgb = overlay_rgb(image, y_hat, m)
    height, width = rgb.shape[:2]
    header = f"P6\n{width} {height}\n255\n".encode("ascii")
    return _write_bytes(path, header, rgb.tobytes())


def write_image_archive(path: PathLike, images: Dict[str, np.ndarray]) -> Path:
    """
    Записать изображения в .npz с фиксированными метаданными zip
    (одинаковые массивы дают одинаковые байты).
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as archive:
            for key in sorted(images):
                info = zipfile.ZipInfo(f"{key}.npy", date_time=(1980, 1, 1, 0, 0, 0))
                with archive.open(info, "w") as f:
                    np.lib.format.write_array(f, np.ascontiguousarray(images[key]), allow_pickle=False)
    except OSError as e:
        raise _io_error(path, e)
    return path


def read_image_archive(path: PathLike) -> Dict[str, np.ndarray]:
    """Прочитать изображения, записанные write_image_archive."""
    try:
        with np.load(path, allow_pickle=False) as data:
            return {key: data[key].astype(np.float64) for key in data.files}
    except (OSError, ValueError, zipfile.BadZipFile) as e:
        raise _io_error(path, e)
