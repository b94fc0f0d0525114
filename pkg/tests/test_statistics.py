"""
Тесты метрик, журнала и таблиц.
"""

import json

import pytest
from hypothesis import given, settings, strategies as st

from crowd_prompt.modules.statistics import (
    EpochRecord, EvalResult, MetricsLog, count_errors, read_table, write_table
)

counts = st.lists(st.floats(min_value=0.0, max_value=1000.0), min_size=1, max_size=20)


class TestCountErrors:
    def test_known_values(self):
        result = count_errors([1.0, 2.0, 6.0], [1.0, 4.0, 3.0])
        assert result.mae == pytest.approx(5.0 / 3.0)
        assert result.rmse == pytest.approx((13.0 / 3.0) ** 0.5)
        assert result.counts == [(1.0, 1.0), (2.0, 4.0), (6.0, 3.0)]

    @settings(max_examples=200, deadline=None)
    @given(st.data(), counts)
    def test_mae_not_above_rmse(self, data, predicted):
        true = data.draw(st.lists(st.floats(min_value=0.0, max_value=1000.0),
                                  min_size=len(predicted), max_size=len(predicted)))
        result = count_errors(predicted, true)
        assert 0.0 <= result.mae <= result.rmse

    def test_perfect_prediction(self):
        result = count_errors([3.0, 4.0], [3.0, 4.0])
        assert result.mae == result.rmse == 0.0

    def test_constant_error(self):
        result = count_errors([1.1, 2.1, 3.1], [1.0, 2.0, 3.0])
        assert result.mae == pytest.approx(result.rmse)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            count_errors([], [])
        with pytest.raises(ValueError):
            count_errors([1.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            EvalResult(mae=2.0, rmse=1.0, counts=[])


class TestMetricsLog:
    def test_file_records(self, tmp_path):
        path = tmp_path / "run" / "metrics.jsonl"
        log = MetricsLog(path)
        log.append(EpochRecord(epoch=0, l_den=0.5, l_seg=0.1, l_con=-0.2, train_mae=3.0))
        log.append(EpochRecord(epoch=1, l_den=0.25, l_seg=0.1, l_con=-0.5, train_mae=2.0,
                               test_mae=1.5, test_rmse=2.5))
        lines = path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 2
        assert set(json.loads(lines[0])) == {"epoch", "l_den", "l_seg", "l_con", "train_mae",
                                             "test_mae", "test_rmse"}
        assert MetricsLog.read(path) == log.records
        assert log.curve("train_mae") == [3.0, 2.0]
        assert log.curve("test_mae") == [None, 1.5]

    def test_new_log_truncates(self, tmp_path):
        path = tmp_path / "metrics.jsonl"
        path.write_text("stale\n", encoding="utf-8")
        MetricsLog(path)
        assert path.read_text(encoding="utf-8") == ""

    def test_in_memory(self):
        log = MetricsLog()
        log.append(EpochRecord(epoch=0, l_den=0.0, l_seg=0.0, l_con=0.0, train_mae=1.0))
        assert len(log.records) == 1 and log.path is None


class TestTables:
    def test_write_and_read(self, tmp_path):
        rows = [{"alpha": 0.1, "variant": "‡", "mae": 1.25, "rmse": 2.5},
                {"alpha": 0.0, "variant": "rsg", "mae": 0.1 + 0.2, "rmse": 1.0}]
        path = write_table(rows, ["alpha", "variant", "mae", "rmse"], tmp_path / "t.tsv")
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "alpha\tvariant\tmae\trmse"
        assert lines[2].split("\t")[2] == repr(0.1 + 0.2)
        table = read_table(path)
        assert table[0]["variant"] == "‡"
        assert float(table[1]["mae"]) == 0.1 + 0.2

    def test_identical_rows_identical_bytes(self, tmp_path):
        rows = [{"a": 1.0 / 3.0, "b": "x"}]
        write_table(rows, ["a", "b"], tmp_path / "1.tsv")
        write_table(rows, ["a", "b"], tmp_path / "2.tsv")
        assert (tmp_path / "1.tsv").read_bytes() == (tmp_path / "2.tsv").read_bytes()
