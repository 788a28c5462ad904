import numpy as np
import pytest

from singlab.datasets import BUILTIN_DATASETS, BuiltinSource, CsvSource, InlineSource
from singlab.errors import DomainError


class TestBuiltin:

    def test_two_point(self):
        ts = BuiltinSource("two-point").load()
        np.testing.assert_array_equal(ts.points, [[-1.0], [1.0]])
        assert ts.classes() == [0, 1]
        assert ts.class_names == {0: "minus", 1: "plus"}

    def test_brightness_toy(self):
        ts = BuiltinSource("brightness-toy").load()
        assert (ts.N, ts.d) == (2, 16)
        np.testing.assert_array_equal(ts.class_mean(0), -np.ones(16))
        np.testing.assert_array_equal(ts.class_mean(1), np.ones(16))
        assert ts.class_names[1] == "bright"

    def test_grid_9(self):
        ts = BuiltinSource("grid-9").load()
        assert (ts.N, ts.d) == (9, 2)
        assert ts.labels is None
        np.testing.assert_array_equal(ts.class_mean(), [0.0, 0.0])

    def test_every_name_loads(self):
        for name in BUILTIN_DATASETS:
            assert BuiltinSource(name).load().N >= 2

    def test_unknown(self):
        with pytest.raises(DomainError, match="two-point"):
            BuiltinSource("mnist")

    def test_describe(self):
        assert BuiltinSource("grid-9").describe() == "builtin:grid-9"


class TestCsv:

    def test_labeled_with_header(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("x0,x1,label\n0.0,1.0,0\n2.5,-1.0,1\n1.0,1.0,1\n")
        ts = CsvSource(path).load()
        assert (ts.N, ts.d) == (3, 2)
        np.testing.assert_array_equal(ts.labels, [0, 1, 1])
        np.testing.assert_allclose(ts.class_mean(1), [1.75, 0.0])

    def test_headerless(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("1.5\n-2\n\n3\n")
        ts = CsvSource(path).load()
        np.testing.assert_array_equal(ts.points[:, 0], [1.5, -2.0, 3.0])
        assert ts.labels is None

    def test_header_without_label_column(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("a,b\n1,2\n3,4\n")
        ts = CsvSource(path).load()
        assert ts.d == 2 and ts.labels is None

    def test_non_numeric(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("x,label\n1.0,0\noops,1\n")
        with pytest.raises(DomainError, match="non-numeric"):
            CsvSource(path).load()

    def test_ragged_rows(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("x0,x1\n1.0,2.0\n3.0\n")
        with pytest.raises(DomainError, match=r"points.csv:3: 1 coordinates"):
            CsvSource(path).load()

    def test_line_numbers_count_blank_lines(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("a,b\n1,2\n\n3,x\n")
        with pytest.raises(DomainError, match=r"points.csv:4: non-numeric"):
            CsvSource(path).load()

    def test_fractional_label(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("x,label\n1.0,0\n2.0,1.5\n")
        with pytest.raises(DomainError, match="label 1.5 is not an integer"):
            CsvSource(path).load()

    def test_integral_float_label(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("x,label\n1.0,0\n2.0,1.0\n")
        np.testing.assert_array_equal(CsvSource(path).load().labels, [0, 1])

    def test_missing(self, tmp_path):
        with pytest.raises(DomainError, match="not found"):
            CsvSource(tmp_path / "absent.csv").load()

    def test_empty(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("\n")
        with pytest.raises(DomainError, match="empty"):
            CsvSource(path).load()


class TestInline:

    def test_points_and_labels(self):
        ts = InlineSource([[0.0], [2.0], [5.0]], [1, 1, 0]).load()
        assert ts.classes() == [0, 1]
        np.testing.assert_array_equal(ts.class_mean(1), [1.0])

    def test_label_count_mismatch(self):
        with pytest.raises(DomainError):
            InlineSource([[0.0], [2.0]], [1]).load()

    def test_ragged_points(self):
        with pytest.raises(DomainError, match="inline point 2 has 1 coordinates, point 0 has 2"):
            InlineSource([[0.0, 1.0], [2.0, 2.0], [5.0]]).load()
