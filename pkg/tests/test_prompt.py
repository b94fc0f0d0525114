"""
Тесты точечного промпта и хранилища целевых масок.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from crowd_prompt.modules.cache import ContextMaskCache
from crowd_prompt.modules.errors import DimensionMismatchError, UnknownSceneError
from crowd_prompt.modules.geometry import binarize
from crowd_prompt.modules.prompt import (
    PromptConfig, TargetStore, context_cache_key, context_mask, offline_prompt,
    online_prompt, refresh_targets
)
from crowd_prompt.modules.targets import KernelSpec, density_from_points
from tests.conftest import annotations, make_annotation


def _clipped_pixel(p, ann):
    px, py = p.pixel()
    return min(max(py, 0), ann.height - 1), min(max(px, 0), ann.width - 1)


class TestPromptMonotonicity:
    @settings(max_examples=100, deadline=None)
    @given(annotations(), st.data())
    def test_offline_contains_inputs_and_points(self, ann, data):
        y = density_from_points(ann, KernelSpec(size=5, sigma=1.0))
        m_p = data.draw(hnp.arrays(np.bool_, ann.shape))
        m = offline_prompt(m_p, y)
        assert not (m_p & ~m).any()
        assert not (binarize(y) & ~m).any()
        for p in ann.points:
            assert m[_clipped_pixel(p, ann)]

    @settings(max_examples=100, deadline=None)
    @given(annotations(), st.data(), st.integers(1, 4))
    def test_online_stays_inside_context(self, ann, data, K):
        m = data.draw(hnp.arrays(np.bool_, ann.shape))
        y_hat = data.draw(hnp.arrays(np.float64, ann.shape,
                                     elements=st.floats(min_value=0.0, max_value=1.0)))
        m_K = context_mask(ann, K)
        updated = online_prompt(m, y_hat, m_K, 1e-3)
        assert not (updated & ~m_K).any()

    @settings(max_examples=100, deadline=None)
    @given(annotations(), st.integers(1, 5))
    def test_context_mask_covers_every_point(self, ann, K):
        m_K = context_mask(ann, K)
        assert m_K.shape == ann.shape
        for p in ann.points:
            assert m_K[_clipped_pixel(p, ann)]

    def test_online_prompt_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            online_prompt(np.zeros((3, 3), bool), np.zeros((3, 4)), np.ones((3, 3), bool), 0.0)


class TestOnlinePrompt:
    @settings(max_examples=100, deadline=None)
    @given(annotations(), st.data(), st.integers(1, 4))
    def test_grows_then_settles(self, ann, data, K):
        m_K = context_mask(ann, K)
        m = data.draw(hnp.arrays(np.bool_, ann.shape)) & m_K
        y_hat = data.draw(hnp.arrays(np.float64, ann.shape,
                                     elements=st.floats(min_value=0.0, max_value=1.0)))
        updated = online_prompt(m, y_hat, m_K, 1e-3)
        assert not (m & ~updated).any()
        assert np.array_equal(online_prompt(updated, y_hat, m_K, 1e-3), updated)

    @settings(max_examples=50, deadline=None)
    @given(annotations(), st.data())
    def test_repeated_refreshes_are_monotone(self, ann, data):
        m_K = context_mask(ann, 2)
        m = offline_prompt(np.zeros(ann.shape, bool), density_from_points(ann, KernelSpec(size=5, sigma=1.0))) & m_K
        predictions = data.draw(st.lists(
            hnp.arrays(np.float64, ann.shape, elements=st.floats(min_value=0.0, max_value=1.0)),
            min_size=1, max_size=4
        ))
        for y_hat in predictions:
            updated = online_prompt(m, y_hat, m_K, 1e-3)
            assert not (m & ~updated).any()
            m = updated
        assert np.array_equal(online_prompt(m, predictions[-1], m_K, 1e-3), m)


class TestContextMask:
    def test_single_point_gives_full_mask(self):
        assert context_mask(make_annotation([(3.0, 3.0)], width=6, height=5), 3).all()
        assert context_mask(make_annotation([], width=6, height=5), 3).all()

    def test_two_points_give_diameter_disk(self):
        ann = make_annotation([(4.0, 8.0), (12.0, 8.0)])
        m_K = context_mask(ann, 1)
        assert m_K[8, 8] and m_K[4, 8] and m_K[12, 8]
        assert not m_K[0, 0] and not m_K[8, 15]

    def test_larger_k_grows_context(self):
        ann = make_annotation([(1.0, 1.0), (3.0, 1.0), (14.0, 14.0), (12.0, 14.0)])
        assert context_mask(ann, 3).sum() > context_mask(ann, 1).sum()

    def test_cache_key_depends_on_points_and_k(self):
        a = make_annotation([(1.0, 1.0), (2.0, 2.0)])
        b = make_annotation([(1.0, 1.0), (2.0, 2.5)])
        assert context_cache_key(a, 3) == context_cache_key(a, 3)
        assert context_cache_key(a, 3) != context_cache_key(a, 2)
        assert context_cache_key(a, 3) != context_cache_key(b, 3)
        assert context_cache_key(a, 3).startswith("scene-")


class TestTargetStore:
    def test_initialize_and_get(self):
        store = TargetStore()
        store.initialize("s", np.eye(3, dtype=bool))
        mask = store.get("s")
        assert "s" in store and len(store) == 1
        assert store.epoch_initialized["s"] and store.refresh_count["s"] == 0
        with pytest.raises(ValueError):
            mask[0, 1] = True

    def test_unknown_scene(self):
        store = TargetStore()
        with pytest.raises(UnknownSceneError):
            store.get("missing")
        with pytest.raises(KeyError):
            store.lock_for("missing")

    def test_replace_keeps_old_reference(self):
        store = TargetStore()
        store.initialize("s", np.zeros((2, 2), bool))
        old = store.get("s")
        store.replace("s", np.ones((2, 2), bool))
        assert not old.any() and store.get("s").all()
        assert store.refresh_count["s"] == 1
        with pytest.raises(DimensionMismatchError):
            store.replace("s", np.ones((3, 2), bool))

    def test_items_sorted(self):
        store = TargetStore()
        for name in ("b", "a", "c"):
            store.initialize(name, np.zeros((1, 1), bool))
        assert [k for k, _ in store.items()] == ["a", "b", "c"]


class TestRefreshTargets:
    def _setup(self):
        ann = make_annotation([(3.0, 3.0), (5.0, 3.0)], width=10, height=8)
        store = TargetStore()
        store.initialize(ann.scene_id, np.zeros(ann.shape, bool))
        y_hat = np.zeros(ann.shape)
        y_hat[3, 4] = 1.0
        y_hat[7, 9] = 1.0
        return ann, store, y_hat

    def test_before_kappa_is_noop(self):
        ann, store, y_hat = self._setup()
        refresh_targets(store, ann.scene_id, y_hat, ann, PromptConfig(K=1, kappa=5), epoch=4)
        assert not store.get(ann.scene_id).any()
        assert store.refresh_count[ann.scene_id] == 0

    def test_from_kappa_adds_prediction_inside_context(self):
        ann, store, y_hat = self._setup()
        refresh_targets(store, ann.scene_id, y_hat, ann, PromptConfig(K=1, kappa=5), epoch=5)
        mask = store.get(ann.scene_id)
        assert mask[3, 4]
        assert not mask[7, 9]
        assert store.refresh_count[ann.scene_id] == 1

    def test_unknown_scene_raises_even_before_kappa(self):
        ann, _, y_hat = self._setup()
        with pytest.raises(UnknownSceneError):
            refresh_targets(TargetStore(), ann.scene_id, y_hat, ann, PromptConfig(kappa=5), epoch=0)

    def test_context_mask_computed_once(self):
        ann, _, y_hat = self._setup()
        cache = ContextMaskCache()
        store = TargetStore(cache)
        store.initialize(ann.scene_id, np.zeros(ann.shape, bool))
        cfg = PromptConfig(K=1, kappa=0)
        for epoch in range(3):
            refresh_targets(store, ann.scene_id, y_hat, ann, cfg, epoch)
        info = cache.get_cache_info()
        assert info["misses"] == 1 and info["hits"] == 2

    def test_prompt_config_validation(self):
        with pytest.raises(ValueError):
            PromptConfig(K=0)
        with pytest.raises(ValueError):
            PromptConfig(kappa=-1)
