"""
Тесты синтетического стенда и экспериментов.
"""

import numpy as np
import pytest
from pydantic import ValidationError

from crowd_prompt.core.bench import (
    SceneSpec, eval_counts, gen_dataset, gen_scene, mask_iou, run_ablation,
    run_convergence_study, run_hparam_study, run_iou_study, run_mask_source_study,
    run_noise_sweep
)
from crowd_prompt.core.trainer import TrainConfig
from crowd_prompt.core import bench
from crowd_prompt.modules.constants import ABLATION_ORDER, PseudoSource
from crowd_prompt.modules.errors import ConfigError, DimensionMismatchError, PlacementError
from crowd_prompt.modules.prompt import PromptConfig
from crowd_prompt.modules.targets import KernelSpec
from tests.conftest import make_annotation


class TestGenerator:
    def test_scene_shape_and_annotation(self, tiny_spec):
        image, ann = gen_scene(tiny_spec, "s")
        assert image.shape == (3, 12, 12) and image.dtype == np.float64
        assert image.min() >= 0.0 and image.max() <= 1.0
        assert tiny_spec.count_min <= len(ann.points) <= tiny_spec.count_max
        assert len(ann.boxes) == len(ann.points)
        for p, box in zip(ann.points, ann.boxes):
            assert box.contains(p)
        ann.check_bounds()

    def test_scene_deterministic(self, tiny_spec):
        a_image, a_ann = gen_scene(tiny_spec)
        b_image, b_ann = gen_scene(tiny_spec)
        assert np.array_equal(a_image, b_image) and a_ann == b_ann

    def test_dataset_split_and_ids(self, tiny_dataset):
        assert [s.scene_id for s in tiny_dataset.train] == [f"train-{i:04d}" for i in range(4)]
        assert [s.scene_id for s in tiny_dataset.test] == ["test-0000", "test-0001"]
        assert all(s.split == "test" for s in tiny_dataset.test)
        assert tiny_dataset.by_id("test-0001").split == "test"

    def test_dataset_deterministic(self, tiny_spec):
        a = gen_dataset(tiny_spec, 3, 1)
        b = gen_dataset(tiny_spec, 3, 1)
        c = gen_dataset(tiny_spec.model_copy(update={"seed": 8}), 3, 1)
        assert all(np.array_equal(x.image, y.image) for x, y in zip(a.scenes, b.scenes))
        assert any(not np.array_equal(x.image, y.image) for x, y in zip(a.scenes, c.scenes))

    def test_placement_failure(self):
        spec = SceneSpec(width=6, height=6, count_min=10, count_max=10,
                         radius_min=2.0, radius_max=2.0, max_attempts=5)
        with pytest.raises(PlacementError):
            gen_scene(spec)

    def test_spec_ranges(self):
        with pytest.raises(ValidationError):
            SceneSpec(count_min=5, count_max=2)
        with pytest.raises(ValidationError):
            SceneSpec(radius_min=3.0, radius_max=2.0)
        with pytest.raises(ValidationError):
            SceneSpec(rho=1.5)


class TestMetrics:
    def test_eval_counts(self):
        anns = [make_annotation([(1.0, 1.0), (2.0, 2.0)]), make_annotation([])]
        y_hats = [np.full((16, 16), 3.0 / 256), np.zeros((16, 16))]
        result = eval_counts(y_hats, anns)
        assert result.mae == pytest.approx(0.5)
        assert result.rmse == pytest.approx(np.sqrt(0.5))

    def test_mask_iou(self):
        a = np.array([[True, True], [False, False]])
        b = np.array([[True, False], [True, False]])
        assert mask_iou(a, b) == pytest.approx(1.0 / 3.0)
        assert mask_iou(np.zeros((2, 2), bool), np.zeros((2, 2), bool)) == 1.0
        with pytest.raises(DimensionMismatchError):
            mask_iou(a, np.zeros((3, 2), bool))


class TestExperiments:
    def test_ablation_rows(self, tiny_dataset, tiny_config):
        rows = run_ablation(tiny_dataset, tiny_config, ["reg", "ddag"])
        assert [r["variant"] for r in rows] == ["reg", "‡"]
        assert all(r["alpha"] == 0.0 and 0.0 <= r["mae"] <= r["rmse"] for r in rows)

    def test_ablation_is_deterministic(self, tiny_dataset, tiny_config):
        assert run_ablation(tiny_dataset, tiny_config, ["rsg"]) == run_ablation(tiny_dataset, tiny_config, ["rsg"])

    def test_noise_sweep(self, tiny_dataset, tiny_config):
        rows = run_noise_sweep(tiny_dataset, [0.0, 0.5], ["rsg"], tiny_config)
        assert [(r["alpha"], r["variant"]) for r in rows] == [(0.0, "rsg"), (0.5, "rsg")]
        with pytest.raises(ConfigError):
            run_noise_sweep(tiny_dataset, [0.7], ["rsg"], tiny_config)

    def test_noise_sweep_pretrains_on_boxes(self, tiny_dataset, tiny_config, monkeypatch):
        sources = []
        original = bench.pretrain_segmenter

        def recording(dataset, cfg, source=PseudoSource.BOX, **kwargs):
            sources.append(source)
            return original(dataset, cfg, source, **kwargs)

        monkeypatch.setattr(bench, "pretrain_segmenter", recording)
        cfg = tiny_config.model_copy(update={"pseudo_source": PseudoSource.POINT})
        run_noise_sweep(tiny_dataset, [0.0, 0.5], ["rsg"], cfg)
        assert sources == [PseudoSource.BOX, PseudoSource.BOX]

    def test_convergence_curves(self, tiny_dataset, tiny_config):
        curves = run_convergence_study(tiny_dataset, tiny_config, (0.0, 1.0))
        assert sorted(curves) == [0.0, 1.0]
        assert all(len(records) == tiny_config.epochs for records in curves.values())
        assert all(r.l_con == 0.0 for r in curves[0.0])

    def test_mask_source_study(self, tiny_dataset, tiny_config):
        rows = run_mask_source_study(tiny_dataset, tiny_config)
        assert [(r["source"], r["variant"]) for r in rows] == [
            ("empty", "‡"), ("point", "‡"), ("box", "‡"), ("point", "rsg"), ("box", "rsg")
        ]

    def test_hparam_study(self, tiny_dataset, tiny_config):
        tables = run_hparam_study(tiny_dataset, tiny_config, k_values=[1, 2], kappa_values=[0, 3],
                                  weight_grid=[[1.0, 0.0, 0.0], [1.0, 0.5, 0.5]])
        assert [r["value"] for r in tables["K"]] == [1, 2]
        assert [r["value"] for r in tables["kappa"]] == [0, 3]
        assert [r["value"] for r in tables["weights"]] == ["1/0/0", "1/0.5/0.5"]
        with pytest.raises(ConfigError):
            run_hparam_study(tiny_dataset, tiny_config, k_values=[], kappa_values=[4], weight_grid=[])

    def test_iou_study(self, tiny_dataset, tiny_config):
        rows = run_iou_study(tiny_dataset, tiny_config, ["rsg", "ddag"])
        assert [(r["variant"], r["masks"], r["split"]) for r in rows] == [
            ("-", "pseudo", "train"),
            ("rsg", "targets", "train"), ("rsg", "predicted", "test"),
            ("‡", "targets", "train"), ("‡", "predicted", "test")
        ]
        assert all(0.0 <= r["iou"] <= 1.0 for r in rows)


@pytest.fixture(scope="module")
def desk_setup():
    spec = SceneSpec(seed=0)
    dataset = gen_dataset(spec, n_train=200, n_test=50)
    cfg = TrainConfig(epochs=40, learning_rate=1e-3, batch_size=16, seed=0,
                      prompt=PromptConfig(K=3, kappa=20), kernel=KernelSpec(), pretrain_epochs=15)
    return dataset, cfg


@pytest.mark.slow
def test_full_variant_beats_regression_only(desk_setup):
    dataset, cfg = desk_setup
    mae = {r["variant"]: r["mae"] for r in run_ablation(dataset, cfg, ABLATION_ORDER)}
    assert len(mae) == 7
    assert mae["‡"] <= 0.9 * mae["reg"]
    assert mae["‡"] < mae["rsg"] < mae["reg"]
    assert mae["‡"] <= 1.05 * mae["p‡"]
    assert mae["‡"] <= 1.05 * mae["c†"]


@pytest.mark.slow
def test_full_variant_degrades_less_under_box_noise(desk_setup):
    dataset, cfg = desk_setup
    rows = run_noise_sweep(dataset, [0.0, 0.25, 0.5], ["rsg", "ddag"], cfg)
    mae = {(r["alpha"], r["variant"]): r["mae"] for r in rows}
    assert len(mae) == 6
    full = mae[(0.5, "‡")] - mae[(0.0, "‡")]
    baseline = mae[(0.5, "rsg")] - mae[(0.0, "rsg")]
    assert full < baseline


@pytest.mark.slow
def test_context_loss_speeds_up_convergence(desk_setup):
    dataset, cfg = desk_setup
    curves = run_convergence_study(dataset, cfg, (0.0, 1.0))
    assert curves[1.0][10].test_mae <= curves[0.0][10].test_mae


@pytest.mark.slow
def test_targets_improve_over_pseudo_masks(desk_setup):
    dataset, cfg = desk_setup
    rows = run_iou_study(dataset, cfg, ["ddag"])
    pseudo = next(r["iou"] for r in rows if r["masks"] == "pseudo")
    targets = next(r["iou"] for r in rows if r["masks"] == "targets")
    assert targets > pseudo
