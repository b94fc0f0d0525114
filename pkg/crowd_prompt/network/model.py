"""
Двухветвевая сеть подсчета: общий сверточный ствол, ветви регрессора и
сегментатора, слияние через сигмоидный затвор и выходные головы.

Прямой и обратный проходы реализованы вручную на numpy; grad_check сверяет
аналитические градиенты с центральными разностями общей потери.
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from crowd_prompt.modules.constants import (
    BCE_EPSILON, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, DEFAULT_TAU_MASK,
    DENSITY_HEAD_BIAS_INIT, DENSITY_HEAD_WEIGHT_SCALE, ERROR_MESSAGES
)
from crowd_prompt.modules.errors import (
    ConfigError, DimensionMismatchError, FormatError, StaleTraceError
)
from crowd_prompt.modules.losses import LossWeights, total_loss
from crowd_prompt.network.base import BaseLayer, ChannelPlan
from crowd_prompt.network.layers import ChannelAffine, Conv2D, relu, sigmoid

logger = logging.getLogger(__name__)

Block = Tuple[Conv2D, ChannelAffine]


class TwoBranchNetwork:
    """Топология сети по плану каналов."""

    def __init__(self, plan: ChannelPlan):
        self.plan = plan
        k = plan.kernel_size
        self.backbone = self._chain("backbone", plan.in_channels, plan.backbone, k)
        trunk = plan.backbone[-1]
        self.regressor = self._chain("regressor", trunk, plan.branch, k)
        self.segmenter = self._chain("segmenter", trunk, plan.branch, k)
        self.density_head = Conv2D(
            "density_head", plan.features, 1, kernel_size=1,
            weight_scale=DENSITY_HEAD_WEIGHT_SCALE,
            bias_init=DENSITY_HEAD_BIAS_INIT if plan.activation == "relu" else 0.0
        )
        self.mask_head = Conv2D("mask_head", plan.features, 1, kernel_size=1)

    @staticmethod
    def _chain(prefix: str, in_channels: int, channels: List[int], k: int) -> List[Block]:
        blocks = []
        for index, out_channels in enumerate(channels):
            name = f"{prefix}.{index}"
            blocks.append((
                Conv2D(f"{name}.conv", in_channels, out_channels, kernel_size=k),
                ChannelAffine(f"{name}.affine", out_channels)
            ))
            in_channels = out_channels
        return blocks

    def layers(self) -> List[BaseLayer]:
        """Слои в фиксированном топологическом порядке."""
        ordered: List[BaseLayer] = []
        for chain in (self.backbone, self.regressor, self.segmenter):
            for conv, affine in chain:
                ordered.extend([conv, affine])
        ordered.extend([self.density_head, self.mask_head])
        return ordered

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        shapes: Dict[str, Tuple[int, ...]] = {}
        for layer in self.layers():
            shapes.update(layer.param_shapes())
        return shapes


class ModelState:
    """Параметры сети и счетчик версий (растет при каждой замене параметров)."""

    def __init__(self, plan: ChannelPlan, params: Dict[str, np.ndarray], version: int = 0):
        self.plan = plan
        self.network = TwoBranchNetwork(plan)
        self.params = params
        self.version = version

    @property
    def parameter_names(self) -> List[str]:
        return list(self.network.param_shapes().keys())

    def parameter_count(self) -> int:
        """Число параметров перечислением массивов."""
        return int(sum(self.params[name].size for name in self.parameter_names))

    def update(self, params: Dict[str, np.ndarray]) -> None:
        """Заменить параметры (после шага оптимизатора)."""
        self.params = params
        self.version += 1

    def copy(self) -> "ModelState":
        return ModelState(self.plan, {k: v.copy() for k, v in self.params.items()}, self.version)

    def equals(self, other: "ModelState") -> bool:
        """Побитовое совпадение плана и параметров."""
        if self.plan != other.plan or self.parameter_names != other.parameter_names:
            return False
        return all(np.array_equal(self.params[n], other.params[n]) for n in self.parameter_names)


class ForwardTrace:
    """Промежуточные активации прямого прохода для обратного."""

    def __init__(self, version: int, batched: bool):
        self.version = version
        self.batched = batched
        self.backbone: List[tuple] = []
        self.regressor: List[tuple] = []
        self.segmenter: List[tuple] = []
        self.regressor_features: Optional[np.ndarray] = None
        self.segmenter_features: Optional[np.ndarray] = None
        self.gate: Optional[np.ndarray] = None
        self.fused: Optional[np.ndarray] = None
        self.density_cache = None
        self.density_active: Optional[np.ndarray] = None
        self.mask_cache = None
        self.mask_prob: Optional[np.ndarray] = None

    def activation_pattern(self) -> List[np.ndarray]:
        """Маски активных элементов всех ReLU (для обнаружения изломов)."""
        masks = [cache[2] for chain in (self.backbone, self.regressor, self.segmenter)
                 for cache in chain if cache[2] is not None]
        if self.density_active is not None:
            masks.append(self.density_active)
        return masks


def expected_parameter_count(plan: ChannelPlan) -> int:
    """
    Число параметров по формуле: свертки, аффинные слои и две головы.

    Args:
        plan: План каналов

    Returns:
        int: Число параметров
    """
    k2 = plan.kernel_size * plan.kernel_size

    def chain(cin: int, channels: List[int]) -> int:
        total = 0
        for cout in channels:
            total += cin * cout * k2 + cout + 2 * cout
            cin = cout
        return total

    trunk = chain(plan.in_channels, plan.backbone)
    branches = 2 * chain(plan.backbone[-1], plan.branch)
    heads = 2 * (plan.features + 1)
    return trunk + branches + heads


def _as_plan(plan: Union[ChannelPlan, dict, None]) -> ChannelPlan:
    if isinstance(plan, ChannelPlan):
        return plan
    try:
        return ChannelPlan(**(plan or {}))
    except ValidationError as e:
        raise ConfigError.from_template("INVALID_PLAN", details=str(e))


def init_model(seed: int, plan: Union[ChannelPlan, dict, None] = None) -> ModelState:
    """
    Детерминированная инициализация параметров (масштаб He по fan-in).

    Args:
        seed: Зерно генератора
        plan: План каналов (по умолчанию 3→16→32, ветви 32→16→8)

    Returns:
        ModelState: Начальное состояние

    Raises:
        ConfigError: Некорректный план
    """
    plan = _as_plan(plan)
    network = TwoBranchNetwork(plan)
    rng = np.random.default_rng(seed)
    params: Dict[str, np.ndarray] = {}
    for layer in network.layers():
        params.update(layer.init_params(rng))
    state = ModelState(plan, params)
    logger.debug("Модель инициализирована: %d параметров, seed=%d", state.parameter_count(), seed)
    return state


def _run_chain(chain: List[Block], params: Dict[str, np.ndarray], x: np.ndarray,
               use_relu: bool) -> Tuple[np.ndarray, List[tuple]]:
    caches = []
    h = x
    for conv, affine in chain:
        z, conv_cache = conv.forward(params, h)
        a, affine_cache = affine.forward(params, z)
        if use_relu:
            h, active = relu(a)
        else:
            h, active = a, None
        caches.append((conv_cache, affine_cache, active))
    return h, caches


def _backprop_chain(chain: List[Block], params: Dict[str, np.ndarray], caches: List[tuple],
                    grad: np.ndarray, grads: Dict[str, np.ndarray]) -> np.ndarray:
    for (conv, affine), (conv_cache, affine_cache, active) in zip(reversed(chain), reversed(caches)):
        if active is not None:
            grad = grad * active
        grad, g = affine.backward(params, affine_cache, grad)
        grads.update(g)
        grad, g = conv.backward(params, conv_cache, grad)
        grads.update(g)
    return grad


def forward(ms: ModelState, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, ForwardTrace]:
    """
    Прямой проход.

    Args:
        ms: Состояние модели
        x: Изображение (C, H, W) или батч (N, C, H, W)

    Returns:
        Tuple: ŷ и m̂ формы (H, W) или (N, H, W) и трасса
    """
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 4
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[1] != ms.plan.in_channels:
        raise DimensionMismatchError.from_template(
            "DIMENSION_MISMATCH", left=("N", ms.plan.in_channels, "H", "W"), right=x.shape
        )

    net = ms.network
    params = ms.params
    use_relu = ms.plan.activation == "relu"
    trace = ForwardTrace(ms.version, batched)

    h, trace.backbone = _run_chain(net.backbone, params, x, use_relu)
    r, trace.regressor = _run_chain(net.regressor, params, h, use_relu)
    s, trace.segmenter = _run_chain(net.segmenter, params, h, use_relu)
    trace.regressor_features = r
    trace.segmenter_features = s

    if ms.plan.gated:
        trace.gate = sigmoid(s)
        fused = trace.gate * r
    else:
        fused = r
    trace.fused = fused

    zd, trace.density_cache = net.density_head.forward(params, fused)
    if use_relu:
        y, trace.density_active = relu(zd)
    else:
        y = zd
    zm, trace.mask_cache = net.mask_head.forward(params, s)
    m = sigmoid(zm)
    trace.mask_prob = m

    y_hat, m_hat = y[:, 0], m[:, 0]
    if not batched:
        y_hat, m_hat = y_hat[0], m_hat[0]
    return y_hat, m_hat, trace


def backward(ms: ModelState, trace: ForwardTrace, grad_y_hat: np.ndarray,
             grad_m_hat: np.ndarray) -> Dict[str, np.ndarray]:
    """
    Обратный проход: градиенты свертки выходных градиентов по всем параметрам.

    Градиенты по элементам батча суммируются.

    Args:
        ms: Состояние модели
        trace: Трасса прямого прохода на этом же состоянии
        grad_y_hat: dL/dŷ той же формы, что ŷ
        grad_m_hat: dL/dm̂ той же формы, что m̂

    Returns:
        Dict[str, np.ndarray]: Градиенты в порядке параметров

    Raises:
        StaleTraceError: Трасса получена на другой версии параметров
    """
    if trace.version != ms.version:
        raise StaleTraceError.from_template("STALE_TRACE", trace=trace.version, state=ms.version)

    net = ms.network
    params = ms.params
    m = trace.mask_prob
    gy = np.asarray(grad_y_hat, dtype=np.float64)
    gm = np.asarray(grad_m_hat, dtype=np.float64)
    if not trace.batched:
        gy, gm = gy[None], gm[None]
    expected = m.shape[:1] + m.shape[2:]
    if gy.shape != expected or gm.shape != expected:
        raise DimensionMismatchError.from_template("DIMENSION_MISMATCH", left=expected, right=gy.shape)
    gy, gm = gy[:, None], gm[:, None]

    grads: Dict[str, np.ndarray] = {}
    if trace.density_active is not None:
        gy = gy * trace.density_active
    g_fused, g = net.density_head.backward(params, trace.density_cache, gy)
    grads.update(g)
    g_s, g = net.mask_head.backward(params, trace.mask_cache, gm * m * (1.0 - m))
    grads.update(g)

    if trace.gate is not None:
        gate = trace.gate
        g_r = g_fused * gate
        g_s = g_s + g_fused * trace.regressor_features * gate * (1.0 - gate)
    else:
        g_r = g_fused

    g_h = _backprop_chain(net.regressor, params, trace.regressor, g_r, grads)
    g_h = g_h + _backprop_chain(net.segmenter, params, trace.segmenter, g_s, grads)
    _backprop_chain(net.backbone, params, trace.backbone, g_h, grads)
    return {name: grads[name] for name in ms.parameter_names}


class GradCheckReport(BaseModel):
    """Результат проверки градиентов."""
    max_rel_error: float
    checked: int
    skipped: List[str]
    worst: Optional[str] = None


def _batch_loss(ms: ModelState, x: np.ndarray, y: np.ndarray, m: Optional[np.ndarray],
                w: LossWeights, tau_mask: float):
    y_hat, m_hat, trace = forward(ms, x)
    value = 0.0
    grad_y = np.zeros_like(y_hat)
    grad_m = np.zeros_like(m_hat)
    pattern = trace.activation_pattern()
    for i in range(y_hat.shape[0]):
        report = total_loss(y_hat[i], y[i], m_hat[i], None if m is None else m[i], w, tau_mask)
        value += report.total
        grad_y[i] = report.grad_y_hat
        grad_m[i] = report.grad_m_hat
        if w.lambda_c > 0:
            pattern += [m_hat[i] > tau_mask, np.array(y_hat[i].sum() > 0)]
        if w.lambda_s > 0:
            pattern.append((m_hat[i] < BCE_EPSILON) | (m_hat[i] > 1.0 - BCE_EPSILON))
    return value, grad_y, grad_m, trace, pattern


def grad_check(ms: ModelState, x: np.ndarray, y: np.ndarray, m: Optional[np.ndarray],
               w: LossWeights, tau_mask: float = DEFAULT_TAU_MASK, coords: int = 200,
               step: float = 1e-6, seed: int = 0) -> GradCheckReport:
    """
    Сравнить backward() с центральными разностями общей потери.

    Координата пропускается, если при сдвигах ±step меняется любой
    излом: маска ReLU, бинаризация m̂ или граница обрезки BCE.

    Args:
        ms: Состояние модели
        x: Изображение (C, H, W) или батч (N, C, H, W)
        y: Целевая плотность
        m: Целевая маска (None, если λs = 0)
        w: Веса потерь
        tau_mask: Порог маски
        coords: Число проверяемых координат (все, если параметров меньше)
        step: Шаг разностей
        seed: Зерно выбора координат

    Returns:
        GradCheckReport: Максимальная относительная ошибка и пропуски
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
        y = np.asarray(y)[None]
        m = None if m is None else np.asarray(m)[None]

    _, grad_y, grad_m, trace, _ = _batch_loss(ms, x, y, m, w, tau_mask)
    analytic = backward(ms, trace, grad_y, grad_m)

    names = ms.parameter_names
    sizes = [ms.params[n].size for n in names]
    offsets = np.cumsum([0] + sizes)
    total = int(offsets[-1])
    rng = np.random.default_rng(seed)
    if total <= coords:
        chosen = np.arange(total)
    else:
        chosen = np.sort(rng.choice(total, size=coords, replace=False))

    worst_error, worst_name = 0.0, None
    checked = 0
    skipped: List[str] = []
    for flat in chosen:
        p = int(np.searchsorted(offsets, flat, side="right") - 1)
        name, local = names[p], int(flat - offsets[p])
        label = f"{name}[{local}]"

        evaluations = []
        for sign in (1.0, -1.0):
            nudged = ModelState(ms.plan, dict(ms.params))
            shifted = ms.params[name].copy()
            shifted.flat[local] += sign * step
            nudged.params[name] = shifted
            value, _, _, _, pattern = _batch_loss(nudged, x, y, m, w, tau_mask)
            evaluations.append((value, pattern))
        (plus, plus_pattern), (minus, minus_pattern) = evaluations
        if any(not np.array_equal(a, b) for a, b in zip(plus_pattern, minus_pattern)):
            skipped.append(label)
            continue

        numeric = (plus - minus) / (2.0 * step)
        a = float(analytic[name].flat[local])
        error = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-6)
        checked += 1
        if error > worst_error or worst_name is None:
            worst_error, worst_name = error, label

    if skipped:
        logger.debug("grad_check: пропущено %d координат на изломах", len(skipped))
    return GradCheckReport(max_rel_error=worst_error, checked=checked, skipped=skipped, worst=worst_name)


def save_checkpoint(ms: ModelState, path: Union[str, Path]) -> None:
    """
    Записать контрольную точку: заголовок с версией, план каналов, затем
    для каждого параметра имя, форма и байты float64 little-endian.

    Args:
        ms: Состояние модели
        path: Путь к файлу
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n".encode("ascii"))
        f.write((json.dumps(ms.plan.model_dump(), sort_keys=True) + "\n").encode("utf-8"))
        for name in ms.parameter_names:
            array = ms.params[name]
            f.write(f"{name}\n".encode("utf-8"))
            f.write((",".join(str(d) for d in array.shape) + "\n").encode("ascii"))
            f.write(np.ascontiguousarray(array, dtype="<f8").tobytes())


def load_checkpoint(path: Union[str, Path]) -> ModelState:
    """
    Прочитать контрольную точку, записанную save_checkpoint.

    Args:
        path: Путь к файлу

    Returns:
        ModelState: Состояние модели (версия 0)

    Raises:
        FormatError: Файл поврежден или не соответствует плану
    """
    path = Path(path)

    def invalid(details: str) -> FormatError:
        return FormatError.from_template("FORMAT_INVALID", path=path, details=details)

    try:
        f = open(path, "rb")
    except OSError as e:
        raise invalid(str(e))

    with f:
        header = f.readline().decode("ascii", errors="replace").split()
        if len(header) != 2 or header[0] != CHECKPOINT_MAGIC:
            raise invalid("неверная сигнатура")
        if header[1] != str(CHECKPOINT_VERSION):
            raise invalid(f"неподдерживаемая версия {header[1]}")
        try:
            plan = ChannelPlan(**json.loads(f.readline().decode("utf-8")))
        except (ValueError, TypeError) as e:
            raise invalid(f"план каналов: {e}")

        expected = TwoBranchNetwork(plan).param_shapes()
        params: Dict[str, np.ndarray] = {}
        for name, shape in expected.items():
            stored_name = f.readline().decode("utf-8").rstrip("\n")
            if stored_name != name:
                raise invalid(f"ожидался параметр '{name}', найден '{stored_name}'")
            line = f.readline().decode("ascii").strip()
            try:
                stored_shape = tuple(int(d) for d in line.split(",")) if line else ()
            except ValueError:
                raise invalid(f"форма параметра '{name}': {line}")
            if stored_shape != shape:
                raise FormatError.from_template("SHAPE_MISMATCH", name=name, left=shape, right=stored_shape)
            count = int(np.prod(shape))
            raw = f.read(count * 8)
            if len(raw) != count * 8:
                raise invalid(f"обрыв данных параметра '{name}'")
            params[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        if f.read(1):
            raise invalid("лишние данные в конце файла")
    return ModelState(plan, params)
