"""
Цикл взаимного обучения регрессора и сегментатора: предобучение
сегментатора, псевдомаски, оптимизатор Adam и обучение вариантов абляции.
"""

import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from tqdm import tqdm

from crowd_prompt.core.dataset import Dataset, Scene
from crowd_prompt.modules.constants import (
    ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON, DEFAULT_BATCH_SIZE, DEFAULT_LEARNING_RATE,
    DEFAULT_TAU_MASK, ERROR_MESSAGES, PseudoSource
)
from crowd_prompt.modules.errors import DimensionMismatchError, VariantError
from crowd_prompt.modules.factory import VariantSpec
from crowd_prompt.modules.losses import LossWeights, total_loss
from crowd_prompt.modules.prompt import PromptConfig, TargetStore, offline_prompt, refresh_targets
from crowd_prompt.modules.statistics import EpochRecord, MetricsLog, count_errors
from crowd_prompt.modules.targets import (
    KernelSpec, box_seg_map, density_from_points, point_pseudo_mask
)
from crowd_prompt.network.base import ChannelPlan
from crowd_prompt.network.model import ModelState, backward, forward, init_model

logger = logging.getLogger(__name__)

# Число сцен в одном прямом проходе при предсказании
PREDICT_CHUNK = 16


class TrainConfig(BaseModel):
    """Параметры обучения."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(default=120, ge=1)
    learning_rate: float = Field(default=DEFAULT_LEARNING_RATE, gt=0.0)
    batch_size: int = Field(default=DEFAULT_BATCH_SIZE, ge=1)
    seed: int = 0
    prompt: PromptConfig = PromptConfig()
    weights: LossWeights = LossWeights()
    kernel: KernelSpec = KernelSpec()
    plan: ChannelPlan = ChannelPlan()
    tau_mask: float = Field(default=DEFAULT_TAU_MASK, gt=0.0, lt=1.0)
    pretrain_epochs: int = Field(default=30, ge=0)
    dilation_radius: float = Field(default=2.0, ge=0.0)
    pseudo_source: PseudoSource = PseudoSource.BOX
    progress: bool = False

    @model_validator(mode="after")
    def _kappa_within_epochs(self) -> "TrainConfig":
        if self.prompt.kappa > self.epochs:
            raise ValueError(f"kappa ({self.prompt.kappa}) больше числа эпох ({self.epochs})")
        return self


class OptimizerState:
    """Моменты Adam по параметрам и счетчик шагов."""

    def __init__(self, m: Dict[str, np.ndarray], v: Dict[str, np.ndarray], step: int = 0,
                 beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2, eps: float = ADAM_EPSILON):
        self.m = m
        self.v = v
        self.step = step
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    @classmethod
    def zeros(cls, params: Dict[str, np.ndarray]) -> "OptimizerState":
        """Нулевые моменты той же формы, что и параметры."""
        return cls(
            m={k: np.zeros_like(v) for k, v in params.items()},
            v={k: np.zeros_like(v) for k, v in params.items()}
        )


def adam_step(os: OptimizerState, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
              lr: float) -> Tuple[OptimizerState, Dict[str, np.ndarray]]:
    """
    Шаг Adam с коррекцией смещения моментов.

    Входные состояние и параметры не изменяются.

    Args:
        os: Состояние оптимизатора
        params: Параметры
        grads: Градиенты
        lr: Скорость обучения

    Returns:
        Tuple[OptimizerState, Dict[str, np.ndarray]]: Новые состояние и параметры
    """
    for name, value in params.items():
        g = grads.get(name)
        if g is None or g.shape != value.shape or os.m[name].shape != value.shape:
            raise DimensionMismatchError.from_template(
                "DIMENSION_MISMATCH", left=value.shape, right=None if g is None else g.shape
            )

    t = os.step + 1
    m, v, updated = {}, {}, {}
    for name, value in params.items():
        g = grads[name]
        m[name] = os.beta1 * os.m[name] + (1.0 - os.beta1) * g
        v[name] = os.beta2 * os.v[name] + (1.0 - os.beta2) * g * g
        m_hat = m[name] / (1.0 - os.beta1 ** t)
        v_hat = v[name] / (1.0 - os.beta2 ** t)
        updated[name] = value - lr * m_hat / (np.sqrt(v_hat) + os.eps)
    return OptimizerState(m, v, t, os.beta1, os.beta2, os.eps), updated


def predict_scenes(state: ModelState, scenes: Sequence[Scene]) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """
    Предсказания ŷ и m̂ для списка сцен.

    Args:
        state: Состояние модели
        scenes: Сцены

    Returns:
        Tuple[List[np.ndarray], List[np.ndarray]]: Плотности и вероятности маски
    """
    y_hats: List[np.ndarray] = []
    m_hats: List[np.ndarray] = []
    for start in range(0, len(scenes), PREDICT_CHUNK):
        chunk = scenes[start:start + PREDICT_CHUNK]
        y_hat, m_hat, _ = forward(state, np.stack([s.image for s in chunk]))
        y_hats.extend(y_hat)
        m_hats.extend(m_hat)
    return y_hats, m_hats


class EpochLosses(BaseModel):
    """Средние по сценам значения слагаемых за эпоху."""
    l_den: float = 0.0
    l_seg: float = 0.0
    l_con: float = 0.0
    total: float = 0.0


def _train_epoch(state: ModelState, opt: OptimizerState, scenes: List[Scene],
                 densities: Dict[str, np.ndarray], masks_for: Callable[[str], Optional[np.ndarray]],
                 weights: LossWeights, cfg: TrainConfig,
                 rng: np.random.Generator) -> Tuple[OptimizerState, EpochLosses, Dict[str, float]]:
    sums = np.zeros(4)
    counts: Dict[str, float] = {}
    order = rng.permutation(len(scenes))
    for start in range(0, len(order), cfg.batch_size):
        batch = [scenes[i] for i in order[start:start + cfg.batch_size]]
        y_hat, m_hat, trace = forward(state, np.stack([s.image for s in batch]))
        grad_y = np.zeros_like(y_hat)
        grad_m = np.zeros_like(m_hat)
        for i, scene in enumerate(batch):
            report = total_loss(
                y_hat[i], densities[scene.scene_id], m_hat[i], masks_for(scene.scene_id),
                weights, cfg.tau_mask
            )
            grad_y[i] = report.grad_y_hat
            grad_m[i] = report.grad_m_hat
            sums += (report.l_den, report.l_seg, report.l_con, report.total)
            counts[scene.scene_id] = float(y_hat[i].sum())
        # Потеря батча - среднее по сценам
        grads = backward(state, trace, grad_y / len(batch), grad_m / len(batch))
        opt, params = adam_step(opt, state.params, grads, cfg.learning_rate)
        state.update(params)
        logger.debug("Шаг %d: батч из %d сцен", opt.step, len(batch))
    means = sums / max(len(scenes), 1)
    return opt, EpochLosses(l_den=means[0], l_seg=means[1], l_con=means[2], total=means[3]), counts


def segmentation_targets(scenes: Sequence[Scene], cfg: TrainConfig,
                         source: PseudoSource = PseudoSource.BOX) -> Dict[str, np.ndarray]:
    """
    Цели предобучения сегментатора: карты боксов или точечные псевдомаски.

    Raises:
        MissingBoxesError: Источник BOX, а у сцены нет боксов
    """
    if source == PseudoSource.BOX:
        return {s.scene_id: box_seg_map(s.annotation) for s in scenes}
    return {
        s.scene_id: point_pseudo_mask(s.annotation, cfg.kernel, cfg.dilation_radius)
        for s in scenes
    }


def pretrain_segmenter(dataset: Dataset, cfg: TrainConfig,
                       source: PseudoSource = PseudoSource.BOX,
                       history: Optional[List[float]] = None) -> ModelState:
    """
    Предобучить сегментатор на картах боксов (или точечных псевдомасках).

    Обучается только L_seg; состояние служит лишь для выдачи псевдомасок.

    Args:
        dataset: Набор сцен (используются сцены обучения)
        cfg: Параметры обучения (эпохи - pretrain_epochs)
        source: Источник целей: BOX или POINT
        history: Список, в который дописывается средняя L_seg каждой эпохи

    Returns:
        ModelState: Предобученное состояние
    """
    scenes = list(dataset.train)
    targets = segmentation_targets(scenes, cfg, source)
    state = init_model(cfg.seed, cfg.plan)
    if cfg.pretrain_epochs == 0:
        return state

    weights = LossWeights(lambda_d=0.0, lambda_s=1.0, lambda_c=0.0)
    zeros = {s.scene_id: np.zeros(s.annotation.shape) for s in scenes}
    opt = OptimizerState.zeros(state.params)
    rng = np.random.default_rng(cfg.seed)
    for epoch in tqdm(range(cfg.pretrain_epochs), desc="pretrain", disable=not cfg.progress):
        opt, losses, _ = _train_epoch(state, opt, scenes, zeros, targets.get, weights, cfg, rng)
        if history is not None:
            history.append(losses.l_seg)
        logger.info("Предобучение, эпоха %d: L_seg=%.6f", epoch, losses.l_seg)
    return state


def emit_pseudo_masks(state: Optional[ModelState], scenes: Sequence[Scene],
                      tau_mask: float = DEFAULT_TAU_MASK,
                      empty: bool = False) -> Dict[str, np.ndarray]:
    """
    Псевдомаски m_p = B(m̂, tau_mask) для каждой сцены.

    Args:
        state: Предобученное состояние (не нужно при empty=True)
        scenes: Сцены
        tau_mask: Порог вероятности
        empty: Вернуть пустые маски (m_p = ∅)

    Returns:
        Dict[str, np.ndarray]: Маски по идентификаторам сцен
    """
    if empty or state is None:
        return {s.scene_id: np.zeros(s.annotation.shape, dtype=bool) for s in scenes}
    _, m_hats = predict_scenes(state, scenes)
    return {s.scene_id: m_hat > tau_mask for s, m_hat in zip(scenes, m_hats)}


def effective_weights(variant: VariantSpec, weights: LossWeights) -> LossWeights:
    """Веса с обнулением отключенных вариантом слагаемых."""
    return LossWeights(
        lambda_d=weights.lambda_d,
        lambda_s=weights.lambda_s if variant.use_segmenter else 0.0,
        lambda_c=weights.lambda_c if variant.use_context_loss else 0.0
    )


def initial_targets(variant: VariantSpec, scenes: Sequence[Scene], densities: Dict[str, np.ndarray],
                    pseudo_masks: Optional[Dict[str, np.ndarray]], store: TargetStore) -> TargetStore:
    """Заполнить хранилище начальными масками: m_p или offline промпт."""
    for scene in scenes:
        if pseudo_masks is None or scene.scene_id not in pseudo_masks:
            raise VariantError(ERROR_MESSAGES["MISSING_PSEUDO_MASKS"].format(
                variant=variant.display_name, scene=scene.scene_id
            ))
        m_p = pseudo_masks[scene.scene_id]
        if variant.use_offline_prompt:
            store.initialize(scene.scene_id, offline_prompt(m_p, densities[scene.scene_id]), offline=True)
        else:
            store.initialize(scene.scene_id, m_p, offline=False)
    return store


def train(variant: VariantSpec, dataset: Dataset, pseudo_masks: Optional[Dict[str, np.ndarray]],
          cfg: TrainConfig, metrics_log: Optional[MetricsLog] = None,
          store: Optional[TargetStore] = None) -> Tuple[ModelState, List[EpochRecord]]:
    """
    Обучить вариант абляции.

    За эпоху: проход по батчам с общей потерей и шагом Adam, затем (с
    эпохи κ, если включен online промпт) обновление целевых масок по
    текущим предсказаниям и оценка на отложенных сценах.

    Args:
        variant: Флаги варианта
        dataset: Набор сцен
        pseudo_masks: Псевдомаски сцен обучения (нужны при сегментаторе)
        cfg: Параметры обучения
        metrics_log: Журнал метрик (по умолчанию в памяти)
        store: Хранилище целевых масок (для доступа к итоговым маскам)

    Returns:
        Tuple[ModelState, List[EpochRecord]]: Итоговое состояние и записи эпох

    Raises:
        VariantError: Несогласованные флаги или нет псевдомасок
    """
    variant.check()
    scenes = list(dataset.train)
    plan = cfg.plan if variant.use_segmenter else cfg.plan.model_copy(update={"gated": False})
    weights = effective_weights(variant, cfg.weights)
    densities = {s.scene_id: density_from_points(s.annotation, cfg.kernel) for s in scenes}
    true_train = {s.scene_id: float(len(s.annotation.points)) for s in scenes}

    store = store if store is not None else TargetStore()
    if variant.use_segmenter:
        initial_targets(variant, scenes, densities, pseudo_masks, store)
        masks_for = store.get
    else:
        def masks_for(scene_id: str) -> Optional[np.ndarray]:
            return None

    state = init_model(cfg.seed, plan)
    opt = OptimizerState.zeros(state.params)
    rng = np.random.default_rng(cfg.seed)
    log = metrics_log if metrics_log is not None else MetricsLog()

    logger.info("Обучение варианта %s: %d сцен, %d эпох", variant.display_name, len(scenes), cfg.epochs)
    for epoch in tqdm(range(cfg.epochs), desc=f"train {variant.display_name}", disable=not cfg.progress):
        opt, losses, train_counts = _train_epoch(state, opt, scenes, densities, masks_for, weights, cfg, rng)

        if variant.use_online_prompt and epoch >= cfg.prompt.kappa:
            y_hats, _ = predict_scenes(state, scenes)
            for scene, y_hat in zip(scenes, y_hats):
                refresh_targets(store, scene.scene_id, y_hat, scene.annotation, cfg.prompt, epoch)

        train_eval = count_errors(
            [train_counts[s.scene_id] for s in scenes], [true_train[s.scene_id] for s in scenes]
        )
        record = EpochRecord(
            epoch=epoch, l_den=losses.l_den, l_seg=losses.l_seg, l_con=losses.l_con,
            train_mae=train_eval.mae
        )
        if dataset.test:
            y_hats, _ = predict_scenes(state, dataset.test)
            test_eval = count_errors(
                [float(y.sum()) for y in y_hats],
                [float(len(s.annotation.points)) for s in dataset.test]
            )
            record.test_mae, record.test_rmse = test_eval.mae, test_eval.rmse
        log.append(record)
        logger.info(
            "Эпоха %d: L_den=%.3e L_seg=%.4f L_con=%.4f train MAE=%.3f test MAE=%s",
            epoch, losses.l_den, losses.l_seg, losses.l_con, train_eval.mae,
            "-" if record.test_mae is None else f"{record.test_mae:.3f}"
        )
    return state, list(log.records)
