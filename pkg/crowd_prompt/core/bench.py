"""
Синтетические сцены толпы, метрики подсчета и IoU, экспериментальные
прогоны: абляция, шум боксов, сходимость, источники псевдомасок,
гиперпараметры и IoU масок.
"""

import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.ndimage import gaussian_filter
from tqdm import tqdm

from crowd_prompt.core.dataset import Dataset, Scene
from crowd_prompt.core.trainer import (
    TrainConfig, emit_pseudo_masks, predict_scenes, pretrain_segmenter, train
)
from crowd_prompt.modules.constants import (
    ABLATION_ORDER, DEFAULT_WEIGHT_GRID, PseudoSource
)
from crowd_prompt.modules.errors import ConfigError, PlacementError
from crowd_prompt.modules.factory import VariantFactory
from crowd_prompt.modules.geometry import Point2, check_same_shape
from crowd_prompt.modules.prompt import TargetStore
from crowd_prompt.modules.statistics import EpochRecord, EvalResult, count_errors
from crowd_prompt.modules.targets import HeadBox, SceneAnnotation, box_seg_map, perturb_boxes

logger = logging.getLogger(__name__)


class SceneSpec(BaseModel):
    """Параметры генератора синтетических сцен."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    width: int = Field(default=32, ge=1)
    height: int = Field(default=32, ge=1)
    count_min: int = Field(default=3, ge=0)
    count_max: int = Field(default=15, ge=0)
    radius_min: float = Field(default=2.0, gt=0.0)
    radius_max: float = Field(default=4.0, gt=0.0)
    rho: float = Field(default=0.6, ge=0.0, le=1.0)
    texture_amplitude: float = Field(default=0.15, ge=0.0)
    texture_sigma: float = Field(default=2.0, gt=0.0)
    head_intensity: float = Field(default=0.85, ge=0.0, le=1.0)
    max_attempts: int = Field(default=1000, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _ranges(self) -> "SceneSpec":
        if self.count_min > self.count_max:
            raise ValueError(f"count_min ({self.count_min}) > count_max ({self.count_max})")
        if self.radius_min > self.radius_max:
            raise ValueError(f"radius_min ({self.radius_min}) > radius_max ({self.radius_max})")
        return self


def _place_heads(spec: SceneSpec, count: int, rng: np.random.Generator) -> List[Tuple[float, float, float]]:
    heads: List[Tuple[float, float, float]] = []
    for index in range(count):
        r = float(rng.uniform(spec.radius_min, spec.radius_max))
        x_hi, y_hi = spec.width - 1 - r, spec.height - 1 - r
        placed = False
        if x_hi >= r and y_hi >= r:
            for _ in range(spec.max_attempts):
                cx, cy = float(rng.uniform(r, x_hi)), float(rng.uniform(r, y_hi))
                if all(math.hypot(cx - hx, cy - hy) >= max(r, hr) + 1.0 for hx, hy, hr in heads):
                    heads.append((cx, cy, r))
                    placed = True
                    break
        if not placed:
            raise PlacementError.from_template("PLACEMENT_FAILED", index=index, attempts=spec.max_attempts)
    return heads


def gen_scene(spec: SceneSpec, scene_id: str = "scene",
              rng: Optional[np.random.Generator] = None) -> Tuple[np.ndarray, SceneAnnotation]:
    """
    Сгенерировать сцену: светлые диски-головы на текстурном фоне.

    Для каждой головы бокс ограничивает диск, а точка аннотации лежит
    равномерно в круге радиуса ρ·r вокруг центра.

    Args:
        spec: Параметры генератора
        scene_id: Идентификатор сцены
        rng: Генератор (по умолчанию из spec.seed)

    Returns:
        Tuple[np.ndarray, SceneAnnotation]: Изображение (3, H, W) в [0, 1] и аннотация

    Raises:
        PlacementError: Головы не удалось разместить
    """
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    count = int(rng.integers(spec.count_min, spec.count_max + 1))
    heads = _place_heads(spec, count, rng)

    noise = rng.normal(0.0, 1.0, size=(3, spec.height, spec.width))
    texture = gaussian_filter(noise, sigma=(0.0, spec.texture_sigma, spec.texture_sigma))
    texture /= texture.std() + 1e-12
    image = 0.3 + spec.texture_amplitude * texture

    ys, xs = np.mgrid[0:spec.height, 0:spec.width]
    points, boxes = [], []
    for cx, cy, r in heads:
        disk = (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
        tint = spec.head_intensity + rng.uniform(-0.05, 0.05, size=3)
        image[:, disk] = tint[:, None]

        angle = rng.uniform(0.0, 2.0 * math.pi)
        dist = spec.rho * r * math.sqrt(rng.uniform(0.0, 1.0))
        points.append(Point2(x=cx + dist * math.cos(angle), y=cy + dist * math.sin(angle)))
        boxes.append(HeadBox(
            x_min=max(cx - r, 0.0), y_min=max(cy - r, 0.0),
            x_max=min(cx + r, spec.width - 1.0), y_max=min(cy + r, spec.height - 1.0)
        ))

    ann = SceneAnnotation(
        scene_id=scene_id, width=spec.width, height=spec.height, points=points, boxes=boxes
    )
    return np.clip(image, 0.0, 1.0), ann


def gen_dataset(spec: SceneSpec, n_train: int = 200, n_test: int = 50) -> Dataset:
    """
    Набор сцен с фиксированным разбиением; каждая сцена получает свой
    дочерний генератор от spec.seed.

    Args:
        spec: Параметры генератора
        n_train: Число сцен обучения
        n_test: Число отложенных сцен

    Returns:
        Dataset: Набор сцен
    """
    children = np.random.SeedSequence(spec.seed).spawn(n_train + n_test)
    train_scenes, test_scenes = [], []
    for index, child in enumerate(children):
        split = "train" if index < n_train else "test"
        local = index if split == "train" else index - n_train
        image, ann = gen_scene(spec, f"{split}-{local:04d}", np.random.default_rng(child))
        scene = Scene(image=image, annotation=ann, split=split)
        (train_scenes if split == "train" else test_scenes).append(scene)
    logger.info("Сгенерировано сцен: %d обучения, %d теста", len(train_scenes), len(test_scenes))
    return Dataset(train=train_scenes, test=test_scenes)


def eval_counts(y_hats: Sequence[np.ndarray], anns: Sequence[SceneAnnotation]) -> EvalResult:
    """
    MAE и RMSE счетчиков: Ĉᵢ = Σŷᵢ, Cᵢ = число точек.

    Args:
        y_hats: Предсказанные плотности
        anns: Аннотации в том же порядке

    Returns:
        EvalResult: Метрики
    """
    if len(y_hats) != len(anns):
        raise ValueError(f"Списки разной длины: {len(y_hats)} и {len(anns)}")
    return count_errors([float(np.sum(y)) for y in y_hats], [float(len(a.points)) for a in anns])


def mask_iou(m_hat: np.ndarray, boxes_mask: np.ndarray) -> float:
    """IoU двух бинарных масок; 1.0, если обе пустые."""
    check_same_shape(m_hat, boxes_mask)
    a, b = np.asarray(m_hat, dtype=bool), np.asarray(boxes_mask, dtype=bool)
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(a, b).sum()) / union


def _reconfigure(cfg: TrainConfig, **updates: Any) -> TrainConfig:
    try:
        return TrainConfig.model_validate({**cfg.model_dump(), **updates})
    except ValueError as e:
        raise ConfigError.from_template("CONFIG_INVALID", details=str(e))


def prepare_pseudo_masks(dataset: Dataset, cfg: TrainConfig,
                         source: Optional[PseudoSource] = None) -> Dict[str, np.ndarray]:
    """
    Псевдомаски сцен обучения из выбранного источника.

    Args:
        dataset: Набор сцен
        cfg: Параметры обучения
        source: box, point или empty (по умолчанию cfg.pseudo_source)

    Returns:
        Dict[str, np.ndarray]: Маски по сценам
    """
    source = source or cfg.pseudo_source
    if source == PseudoSource.EMPTY:
        return emit_pseudo_masks(None, dataset.train, cfg.tau_mask, empty=True)
    state = pretrain_segmenter(dataset, cfg, source)
    return emit_pseudo_masks(state, dataset.train, cfg.tau_mask)


def _final_row(records: List[EpochRecord]) -> Dict[str, Any]:
    last = records[-1]
    return {"mae": last.test_mae, "rmse": last.test_rmse}


def run_ablation(dataset: Dataset, cfg: TrainConfig,
                 variants: Sequence[str] = tuple(ABLATION_ORDER),
                 pseudo_masks: Optional[Dict[str, np.ndarray]] = None,
                 alpha: float = 0.0) -> List[Dict[str, Any]]:
    """
    Обучить каждый вариант на общих псевдомасках и собрать итоговые MAE/RMSE.

    Args:
        dataset: Набор сцен
        cfg: Параметры обучения
        variants: Имена вариантов
        pseudo_masks: Готовые псевдомаски (иначе строятся из cfg.pseudo_source)
        alpha: Значение колонки alpha в строках

    Returns:
        List[Dict[str, Any]]: Строки alpha/variant/mae/rmse
    """
    specs = [VariantFactory.create_variant(name) for name in variants]
    if pseudo_masks is None and any(s.use_segmenter for s in specs):
        pseudo_masks = prepare_pseudo_masks(dataset, cfg)

    rows = []
    for spec in tqdm(specs, desc=f"ablation alpha={alpha}", disable=not cfg.progress):
        _, records = train(spec, dataset, pseudo_masks, cfg)
        rows.append({"alpha": alpha, "variant": spec.display_name, **_final_row(records)})
        logger.info("Вариант %s: MAE=%.4f", spec.display_name, rows[-1]["mae"] or float("nan"))
    return rows


def _scene_seeds(seed: int, n: int) -> List[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)] if n else []


def run_noise_sweep(dataset: Dataset, alphas: Sequence[float], variants: Sequence[str],
                    cfg: TrainConfig) -> List[Dict[str, Any]]:
    """
    Шум боксов: для каждого alpha сдвинуть боксы сцен обучения, заново
    предобучить сегментатор, выдать псевдомаски и обучить варианты.
    Псевдомаски всегда строятся из боксов, независимо от cfg.pseudo_source.

    Args:
        dataset: Набор сцен
        alphas: Доли высоты бокса из [0, 0.5]
        variants: Имена вариантов
        cfg: Параметры обучения

    Returns:
        List[Dict[str, Any]]: Строки alpha/variant/mae/rmse
    """
    for alpha in alphas:
        if not 0.0 <= alpha <= 0.5:
            raise ConfigError.from_template("CONFIG_INVALID", details=f"alpha вне [0, 0.5]: {alpha}")

    if cfg.pseudo_source != PseudoSource.BOX:
        logger.warning("Шум боксов влияет только на псевдомаски из боксов, источник %s заменен на box",
                       cfg.pseudo_source.value)
        cfg = cfg.model_copy(update={"pseudo_source": PseudoSource.BOX})

    seeds = _scene_seeds(cfg.seed, len(dataset.train))
    rows: List[Dict[str, Any]] = []
    for alpha in alphas:
        noisy = {
            s.scene_id: perturb_boxes(s.annotation, alpha, seed)
            for s, seed in zip(dataset.train, seeds)
        }
        noisy_dataset = dataset.with_annotations(noisy)
        rows.extend(run_ablation(noisy_dataset, cfg, variants, alpha=alpha))
    return rows


def run_convergence_study(dataset: Dataset, cfg: TrainConfig,
                          lambda_values: Sequence[float] = (0.0, 1.0),
                          variant: str = "ddag") -> Dict[float, List[EpochRecord]]:
    """
    Обучить полный вариант несколько раз, меняя только λc.

    Args:
        dataset: Набор сцен
        cfg: Параметры обучения
        lambda_values: Значения λc
        variant: Вариант архитектуры

    Returns:
        Dict[float, List[EpochRecord]]: Кривые по эпохам для каждого λc
    """
    spec = VariantFactory.create_variant(variant)
    pseudo_masks = prepare_pseudo_masks(dataset, cfg)
    curves: Dict[float, List[EpochRecord]] = {}
    for lam in lambda_values:
        weights = cfg.weights.model_copy(update={"lambda_c": float(lam)})
        _, records = train(spec, dataset, pseudo_masks, _reconfigure(cfg, weights=weights))
        curves[float(lam)] = records
    return curves


def run_mask_source_study(dataset: Dataset, cfg: TrainConfig) -> List[Dict[str, Any]]:
    """
    Сравнить источники псевдомасок: ∅, точки и боксы для полного варианта,
    точки и боксы для варианта rsg.

    Returns:
        List[Dict[str, Any]]: Строки source/variant/mae/rmse
    """
    cells = [
        (PseudoSource.EMPTY, "ddag"), (PseudoSource.POINT, "ddag"), (PseudoSource.BOX, "ddag"),
        (PseudoSource.POINT, "rsg"), (PseudoSource.BOX, "rsg")
    ]
    masks: Dict[PseudoSource, Dict[str, np.ndarray]] = {}
    rows = []
    for source, name in tqdm(cells, desc="mask sources", disable=not cfg.progress):
        if source not in masks:
            masks[source] = prepare_pseudo_masks(dataset, cfg, source)
        spec = VariantFactory.create_variant(name)
        _, records = train(spec, dataset, masks[source], cfg)
        rows.append({"source": source.value, "variant": spec.display_name, **_final_row(records)})
    return rows


def run_hparam_study(dataset: Dataset, cfg: TrainConfig,
                     k_values: Sequence[int] = (1, 3, 5),
                     kappa_values: Sequence[int] = (),
                     weight_grid: Sequence[Sequence[float]] = tuple(DEFAULT_WEIGHT_GRID),
                     variant: str = "ddag") -> Dict[str, List[Dict[str, Any]]]:
    """
    Перебор K, κ и весов потерь при прочих параметрах из cfg.

    Returns:
        Dict[str, List[Dict[str, Any]]]: Таблицы parameter/value/mae/rmse по перебору
    """
    for kappa in kappa_values:
        if kappa > cfg.epochs:
            raise ConfigError.from_template(
                "CONFIG_INVALID", details=f"kappa {kappa} больше числа эпох {cfg.epochs}"
            )
    spec = VariantFactory.create_variant(variant)
    pseudo_masks = prepare_pseudo_masks(dataset, cfg)

    def run(parameter: str, value: Any, run_cfg: TrainConfig) -> Dict[str, Any]:
        _, records = train(spec, dataset, pseudo_masks, run_cfg)
        return {"parameter": parameter, "value": value, **_final_row(records)}

    tables: Dict[str, List[Dict[str, Any]]] = {"K": [], "kappa": [], "weights": []}
    for k in k_values:
        prompt = cfg.prompt.model_copy(update={"K": int(k)})
        tables["K"].append(run("K", int(k), _reconfigure(cfg, prompt=prompt)))
    for kappa in kappa_values:
        prompt = cfg.prompt.model_copy(update={"kappa": int(kappa)})
        tables["kappa"].append(run("kappa", int(kappa), _reconfigure(cfg, prompt=prompt)))
    for triple in weight_grid:
        lambda_d, lambda_s, lambda_c = (float(v) for v in triple)
        weights = {"lambda_d": lambda_d, "lambda_s": lambda_s, "lambda_c": lambda_c}
        label = f"{lambda_d:g}/{lambda_s:g}/{lambda_c:g}"
        tables["weights"].append(run("weights", label, _reconfigure(cfg, weights=weights)))
    return tables


def mean_iou(masks: Dict[str, np.ndarray], scenes: Sequence[Scene]) -> float:
    """Среднее IoU масок против карт боксов сцен."""
    values = [mask_iou(masks[s.scene_id], box_seg_map(s.annotation)) for s in scenes]
    return float(np.mean(values)) if values else 0.0


def run_iou_study(dataset: Dataset, cfg: TrainConfig,
                  variants: Sequence[str] = ("rsg", "ddag")) -> List[Dict[str, Any]]:
    """
    IoU масок против карт боксов: предсказанные маски на тесте для каждого
    варианта, начальные псевдомаски и итоговые целевые маски на обучении.

    Returns:
        List[Dict[str, Any]]: Строки variant/masks/split/iou
    """
    pseudo_masks = prepare_pseudo_masks(dataset, cfg)
    rows = [{"variant": "-", "masks": "pseudo", "split": "train",
             "iou": mean_iou(pseudo_masks, dataset.train)}]
    for name in variants:
        spec = VariantFactory.create_variant(name)
        store = TargetStore()
        state, _ = train(spec, dataset, pseudo_masks, cfg, store=store)
        rows.append({"variant": spec.display_name, "masks": "targets", "split": "train",
                     "iou": mean_iou(dict(store.items()), dataset.train)})
        if dataset.test:
            _, m_hats = predict_scenes(state, dataset.test)
            predicted = {s.scene_id: m > cfg.tau_mask for s, m in zip(dataset.test, m_hats)}
            rows.append({"variant": spec.display_name, "masks": "predicted", "split": "test",
                         "iou": mean_iou(predicted, dataset.test)})
    return rows
