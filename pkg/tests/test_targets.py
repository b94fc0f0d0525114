"""
Тесты построения целей.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from pydantic import ValidationError

from crowd_prompt.modules.errors import AnnotationBoundsError, MissingBoxesError
from crowd_prompt.modules.geometry import Point2
from crowd_prompt.modules.targets import (
    HeadBox, KernelSpec, SceneAnnotation, box_seg_map, density_from_points, gaussian_kernel,
    perturb_boxes, point_pseudo_mask
)
from tests.conftest import annotations, make_annotation


class TestDensity:
    @settings(max_examples=100, deadline=None)
    @given(annotations(), st.sampled_from([1, 3, 5, 15]))
    def test_mass_is_conserved(self, ann, size):
        density = density_from_points(ann, KernelSpec(size=size, sigma=size / 4.0))
        n = len(ann.points)
        assert density.shape == ann.shape
        assert abs(density.sum() - n) <= 1e-5 * max(n, 1)
        assert (density >= 0).all()

    def test_border_point_keeps_unit_mass(self):
        ann = make_annotation([(0.0, 0.0), (15.9, 15.9)])
        assert density_from_points(ann, KernelSpec()).sum() == pytest.approx(2.0, abs=1e-9)

    def test_empty_annotation_gives_zero_map(self):
        assert not density_from_points(make_annotation([]), KernelSpec()).any()

    def test_peak_at_rounded_pixel(self):
        ann = make_annotation([(3.4, 7.6)])
        density = density_from_points(ann, KernelSpec(size=5, sigma=1.0))
        assert np.unravel_index(density.argmax(), density.shape) == (8, 3)

    def test_out_of_bounds_point_rejected(self):
        ann = make_annotation([(16.0, 2.0)], scene_id="bad")
        with pytest.raises(AnnotationBoundsError) as exc:
            density_from_points(ann, KernelSpec())
        assert exc.value.scene_id == "bad"
        assert exc.value.field == "points[0]"

    def test_kernel_is_normalized_and_symmetric(self):
        kernel = gaussian_kernel(KernelSpec(size=7, sigma=1.5))
        assert kernel.sum() == pytest.approx(1.0)
        assert np.allclose(kernel, kernel.T)
        assert np.allclose(kernel, kernel[::-1, ::-1])

    def test_kernel_spec_validation(self):
        with pytest.raises(ValidationError):
            KernelSpec(size=4)
        with pytest.raises(ValidationError):
            KernelSpec(size=5, sigma=0.0)


class TestMasks:
    def test_point_pseudo_mask_covers_kernel_support(self):
        ann = make_annotation([(8.0, 8.0)])
        spec = KernelSpec(size=3, sigma=1.0)
        mask = point_pseudo_mask(ann, spec, 0.0)
        assert mask.sum() == 9
        assert point_pseudo_mask(ann, spec, 2.0).sum() > 9

    def test_box_seg_map_inclusive(self):
        box = HeadBox(x_min=1, y_min=2, x_max=3, y_max=4)
        ann = make_annotation([(2.0, 3.0)], width=6, height=6, boxes=[box])
        mask = box_seg_map(ann)
        assert mask.sum() == 9
        assert mask[2:5, 1:4].all()

    def test_box_seg_map_needs_boxes(self):
        with pytest.raises(MissingBoxesError):
            box_seg_map(make_annotation([(1.0, 1.0)]))

    def test_boxes_must_parallel_points(self):
        with pytest.raises(ValidationError):
            make_annotation([(1.0, 1.0)], boxes=[])

    def test_box_corners_ordered(self):
        with pytest.raises(ValidationError):
            HeadBox(x_min=3, y_min=0, x_max=1, y_max=2)


class TestPerturbBoxes:
    def _ann(self):
        boxes = [HeadBox(x_min=4, y_min=4, x_max=8, y_max=8), HeadBox(x_min=0, y_min=0, x_max=2, y_max=2)]
        return make_annotation([(6.0, 6.0), (1.0, 1.0)], boxes=boxes)

    def test_alpha_zero_is_identity(self):
        ann = self._ann()
        assert perturb_boxes(ann, 0.0, 3) == ann

    @settings(max_examples=50, deadline=None)
    @given(st.floats(min_value=0.0, max_value=0.5), st.integers(0, 1000))
    def test_shift_is_bounded_and_size_preserved(self, alpha, seed):
        ann = self._ann()
        noisy = perturb_boxes(ann, alpha, seed)
        assert noisy.points == ann.points
        for before, after in zip(ann.boxes, noisy.boxes):
            h = before.height
            assert abs(after.x_min - before.x_min) <= alpha * h + 1e-9
            assert abs(after.y_min - before.y_min) <= alpha * h + 1e-9
            assert after.x_max - after.x_min == pytest.approx(before.x_max - before.x_min)
            assert after.x_min >= 0 and after.y_min >= 0
            assert after.x_max <= ann.width - 1 and after.y_max <= ann.height - 1

    def test_deterministic_for_seed(self):
        ann = self._ann()
        assert perturb_boxes(ann, 0.3, 11) == perturb_boxes(ann, 0.3, 11)

    def test_alpha_out_of_range(self):
        with pytest.raises(ValueError):
            perturb_boxes(self._ann(), 0.6, 0)

    def test_needs_boxes(self):
        with pytest.raises(MissingBoxesError):
            perturb_boxes(make_annotation([(1.0, 1.0)]), 0.1, 0)


def test_scene_annotation_shape():
    ann = SceneAnnotation(width=5, height=3, points=[Point2(x=1, y=1)])
    assert ann.shape == (3, 5)
