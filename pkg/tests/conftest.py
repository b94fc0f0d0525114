"""
Общие фикстуры и стратегии тестов.
"""

import numpy as np
import pytest
from hypothesis import strategies as st

from crowd_prompt.core.bench import SceneSpec, gen_dataset
from crowd_prompt.core.trainer import TrainConfig
from crowd_prompt.modules.geometry import Point2
from crowd_prompt.modules.losses import LossWeights
from crowd_prompt.modules.prompt import PromptConfig
from crowd_prompt.modules.targets import HeadBox, KernelSpec, SceneAnnotation
from crowd_prompt.network.base import ChannelPlan

# Координаты кратны 1/4: точные в float64 и без вырожденной арифметики
quarter = st.integers(min_value=0, max_value=4 * 15).map(lambda v: v / 4.0)


@st.composite
def point_lists(draw, min_size=1, max_size=8):
    """Список точек на сетке 16×16."""
    coords = draw(st.lists(st.tuples(quarter, quarter), min_size=min_size, max_size=max_size))
    return [Point2(x=x, y=y) for x, y in coords]


@st.composite
def annotations(draw, max_points=10, with_boxes=False):
    """Аннотация сцены с точками внутри изображения."""
    width = draw(st.integers(min_value=4, max_value=24))
    height = draw(st.integers(min_value=4, max_value=24))
    xs = st.floats(min_value=0.0, max_value=width - 1e-3, allow_nan=False, allow_infinity=False)
    ys = st.floats(min_value=0.0, max_value=height - 1e-3, allow_nan=False, allow_infinity=False)
    coords = draw(st.lists(st.tuples(xs, ys), max_size=max_points))
    points = [Point2(x=x, y=y) for x, y in coords]
    boxes = None
    if with_boxes:
        boxes = [
            HeadBox(x_min=max(p.x - 1.0, 0.0), y_min=max(p.y - 1.0, 0.0),
                    x_max=min(p.x + 1.0, width - 1.0), y_max=min(p.y + 1.0, height - 1.0))
            for p in points
        ]
    return SceneAnnotation(scene_id="hyp", width=width, height=height, points=points, boxes=boxes)


def make_annotation(points, width=16, height=16, scene_id="scene", boxes=None):
    return SceneAnnotation(
        scene_id=scene_id, width=width, height=height,
        points=[Point2(x=x, y=y) for x, y in points], boxes=boxes
    )


@pytest.fixture
def tiny_plan():
    return ChannelPlan(backbone=[4], branch=[4, 3])


@pytest.fixture
def tiny_spec():
    return SceneSpec(width=12, height=12, count_min=1, count_max=3,
                     radius_min=1.5, radius_max=2.0, seed=7)


@pytest.fixture
def tiny_dataset(tiny_spec):
    return gen_dataset(tiny_spec, n_train=4, n_test=2)


@pytest.fixture
def tiny_config(tiny_plan):
    return TrainConfig(
        epochs=3,
        learning_rate=1e-3,
        batch_size=2,
        seed=0,
        prompt=PromptConfig(K=2, kappa=1),
        weights=LossWeights(),
        kernel=KernelSpec(size=5, sigma=1.0),
        plan=tiny_plan,
        pretrain_epochs=1
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
