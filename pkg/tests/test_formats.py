"""
Тесты файловых форматов: аннотации, PFM, PGM, PPM и архив изображений.
"""

import json

import numpy as np
import pytest

from crowd_prompt.cli.formats import (
    mask_boundary, overlay_rgb, read_annotation_file, read_annotations, read_density_pfm,
    read_image_archive, read_mask_pgm, read_ppm, render_overlay, write_annotations,
    write_density_pfm, write_image_archive, write_mask_pgm
)
from crowd_prompt.modules.errors import (
    AnnotationBoundsError, AnnotationParseError, AnnotationSchemaError, FormatError
)
from crowd_prompt.modules.targets import HeadBox
from tests.conftest import make_annotation


def write_json(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


class TestAnnotations:
    def test_write_and_read(self, tmp_path):
        boxes = [HeadBox(x_min=0.5, y_min=1.0, x_max=3.0, y_max=4.25)]
        anns = [
            make_annotation([(1.5, 2.25)], scene_id="a", boxes=boxes),
            make_annotation([], width=8, height=4, scene_id="b")
        ]
        path = write_annotations(tmp_path / "sub" / "annotations.json", anns, {"a": "train", "b": "test"})
        restored, splits = read_annotation_file(path)
        assert restored == anns
        assert splits == {"a": "train", "b": "test"}
        assert "boxes" not in json.loads(path.read_text(encoding="utf-8"))["scenes"][1]

    def test_parse_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(AnnotationParseError) as exc:
            read_annotations(path)
        assert exc.value.exit_code == 3

    def test_missing_field_names_scene_and_field(self, tmp_path):
        path = write_json(tmp_path / "a.json", {
            "schema_version": 1,
            "scenes": [{"id": "s0", "height": 4, "points": []}]
        })
        with pytest.raises(AnnotationSchemaError) as exc:
            read_annotations(path)
        assert exc.value.scene_id == "s0"
        assert exc.value.field == "scenes[0].width"

    def test_unsupported_version(self, tmp_path):
        path = write_json(tmp_path / "a.json", {"schema_version": 99, "scenes": []})
        with pytest.raises(AnnotationSchemaError) as exc:
            read_annotations(path)
        assert exc.value.field == "schema_version"

    def test_box_count_mismatch(self, tmp_path):
        path = write_json(tmp_path / "a.json", {
            "schema_version": 1,
            "scenes": [{"id": "s0", "width": 4, "height": 4, "points": [[1, 1]], "boxes": []}]
        })
        with pytest.raises(AnnotationSchemaError) as exc:
            read_annotations(path)
        assert exc.value.scene_id == "s0"

    def test_point_out_of_bounds(self, tmp_path):
        path = write_json(tmp_path / "a.json", {
            "schema_version": 1,
            "scenes": [{"id": "s0", "width": 4, "height": 4, "points": [[1, 1], [4.0, 0.0]]}]
        })
        with pytest.raises(AnnotationBoundsError) as exc:
            read_annotations(path)
        assert exc.value.field == "points[1]"
        assert exc.value.exit_code == 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError):
            read_annotations(tmp_path / "absent.json")


class TestRasters:
    def test_density_pfm(self, tmp_path, rng):
        y = rng.random((3, 5)).astype(np.float32).astype(np.float64)
        path = write_density_pfm(y, tmp_path / "d.pfm")
        assert path.read_bytes().startswith(b"Pf\n5 3\n-1.0\n")
        assert np.array_equal(read_density_pfm(path), y)

    def test_big_endian_pfm(self, tmp_path):
        values = np.array([[1.5, -2.0]], dtype=">f4")
        path = tmp_path / "be.pfm"
        path.write_bytes(b"Pf\n2 1\n1.0\n" + values.tobytes())
        assert read_density_pfm(path).tolist() == [[1.5, -2.0]]

    def test_non_finite_density_rejected(self, tmp_path):
        with pytest.raises(FormatError):
            write_density_pfm(np.array([[0.0, np.nan]]), tmp_path / "d.pfm")
        assert not (tmp_path / "d.pfm").exists()

    def test_mask_pgm(self, tmp_path):
        m = np.array([[True, False, True], [False, False, True]])
        path = write_mask_pgm(m, tmp_path / "m.pgm")
        data = path.read_bytes()
        assert data.startswith(b"P5\n3 2\n255\n")
        assert set(data[len(b"P5\n3 2\n255\n"):]) == {0, 255}
        assert np.array_equal(read_mask_pgm(path), m)

    def test_integer_mask_accepted(self, tmp_path):
        path = write_mask_pgm(np.array([[0, 1]]), tmp_path / "m.pgm")
        assert read_mask_pgm(path).tolist() == [[False, True]]

    def test_non_binary_mask_rejected(self, tmp_path):
        with pytest.raises(FormatError):
            write_mask_pgm(np.array([[0.0, 0.5]]), tmp_path / "m.pgm")

    def test_truncated_pgm(self, tmp_path):
        path = tmp_path / "m.pgm"
        path.write_bytes(b"P5\n4 4\n255\n" + bytes(3))
        with pytest.raises(FormatError):
            read_mask_pgm(path)

    def test_wrong_magic(self, tmp_path):
        path = write_mask_pgm(np.zeros((2, 2), bool), tmp_path / "m.pgm")
        with pytest.raises(FormatError):
            read_density_pfm(path)


class TestOverlay:
    def test_boundary_is_outer_ring(self):
        m = np.zeros((3, 3), bool)
        m[1, 1] = True
        expected = np.array([[False, True, False], [True, False, True], [False, True, False]])
        assert np.array_equal(mask_boundary(m), expected)

    def test_colours(self):
        image = np.zeros((3, 4, 4))
        y = np.zeros((4, 4))
        y[3, 3] = 2.0
        m = np.zeros((4, 4), bool)
        m[1, 1] = True
        rgb = overlay_rgb(image, y, m)
        assert rgb.shape == (4, 4, 3) and rgb.dtype == np.uint8
        assert rgb[0, 1].tolist() == [0, 255, 0]
        assert rgb[1, 1].tolist() == [0, 0, 0]
        assert rgb[3, 3].tolist() == [255, 0, 0]

    def test_render_writes_ppm(self, tmp_path, rng):
        image = rng.random((3, 5, 6))
        y = rng.random((5, 6))
        m = y > 0.5
        path = render_overlay(image, y, m, tmp_path / "o.ppm")
        assert path.read_bytes().startswith(b"P6\n6 5\n255\n")
        assert np.array_equal(read_ppm(path), overlay_rgb(image, y, m))

    def test_shape_mismatch(self):
        with pytest.raises(FormatError):
            overlay_rgb(np.zeros((3, 4, 4)), np.zeros((4, 5)), np.zeros((4, 4), bool))


def test_image_archive_is_byte_stable(tmp_path, rng):
    images = {"b": rng.random((3, 4, 4)), "a": rng.random((3, 2, 2))}
    first = write_image_archive(tmp_path / "1.npz", images)
    second = write_image_archive(tmp_path / "2.npz", dict(reversed(list(images.items()))))
    assert first.read_bytes() == second.read_bytes()
    restored = read_image_archive(first)
    assert sorted(restored) == ["a", "b"]
    assert np.array_equal(restored["b"], images["b"])
