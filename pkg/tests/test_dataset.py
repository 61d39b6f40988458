import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from umato.dataset import (
    DataError,
    Dataset,
    Projection,
    gen_s_curve,
    gen_spheres,
    gen_swiss_roll,
    load_csv,
    load_labeled_csv,
    load_mammoth,
    load_projection,
    save_csv,
    standardize,
)


class TestDatasetType:
    def test_rejects_non_finite(self):
        with pytest.raises(DataError):
            Dataset(np.array([[1.0, np.nan]]))

    def test_rejects_label_length_mismatch(self):
        with pytest.raises(DataError):
            Dataset(np.zeros((3, 2)), labels=np.array([0, 1]))

    def test_rejects_negative_labels(self):
        with pytest.raises(DataError):
            Dataset(np.zeros((2, 2)), labels=np.array([0, -1]))

    def test_projection_rejects_inf(self):
        with pytest.raises(DataError):
            Projection(np.array([[0.0, np.inf]]))


class TestStandardize:
    def test_two_point_column(self):
        out = standardize(Dataset(np.array([[1.0], [3.0]])))
        np.testing.assert_array_equal(out.points[:, 0], [-1.0, 1.0])

    def test_constant_column_becomes_zero(self):
        out = standardize(Dataset(np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 4.0]])))
        np.testing.assert_array_equal(out.points[:, 0], 0.0)

    def test_moments(self):
        x = np.random.default_rng(3).normal(size=(3, 2)) * [4.0, 0.1] + [7.0, -2.0]
        out = standardize(Dataset(x)).points
        assert np.abs(out.mean(axis=0)).max() < 1e-12
        np.testing.assert_allclose(out.var(axis=0), 1.0, atol=1e-12)

    def test_needs_two_rows(self):
        with pytest.raises(DataError):
            standardize(Dataset(np.ones((1, 3))))

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(2, 20), st.integers(1, 4)),
                  elements=st.floats(-1e3, 1e3)))
    def test_idempotent(self, x):
        once = standardize(Dataset(x))
        twice = standardize(once)
        np.testing.assert_allclose(twice.points, once.points, atol=1e-9)


class TestCsv:
    def test_parse_with_label(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("f0,f1,label\n0.5,1.0,2\n")
        d = load_csv(p, label_column="label")
        assert (d.n, d.dim) == (1, 2)
        np.testing.assert_array_equal(d.labels, [2])

    def test_ragged_row_names_row(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("a,b\n1,2\n3\n")
        with pytest.raises(DataError, match="row 2"):
            load_csv(p)

    def test_non_numeric_cell(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("a,b\n1,x\n")
        with pytest.raises(DataError, match="row 1, column 1"):
            load_csv(p)

    def test_unknown_label_column(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(DataError, match="unknown label column"):
            load_csv(p, label_column="label")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_csv(tmp_path / "nope.csv")

    def test_string_labels_encoded(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("a,label\n1,cat\n2,dog\n3,cat\n")
        d = load_csv(p, label_column="label")
        np.testing.assert_array_equal(d.labels, [0, 1, 0])
        assert d.label_names == ["cat", "dog"]
        save_csv(d, tmp_path / "b.csv")
        assert (tmp_path / "b.csv.labels").read_text() == "0,cat\n1,dog\n"

    def test_projection_body(self, tmp_path):
        p = tmp_path / "p.csv"
        save_csv(Projection(np.array([[0.0, 1.0]]), labels=np.array([3])), p)
        assert p.read_text() == "x,y,label\n0,1,3\n"

    def test_round_trip_100_rows(self, tmp_path):
        rng = np.random.default_rng(0)
        d = Dataset(rng.normal(size=(100, 4)) * 1e3, labels=rng.integers(0, 5, 100))
        save_csv(d, tmp_path / "d.csv", comments=["seed=0"])
        back = load_labeled_csv(tmp_path / "d.csv")
        np.testing.assert_array_equal(back.points, d.points)
        np.testing.assert_array_equal(back.labels, d.labels)

    def test_projection_round_trip(self, tmp_path):
        y = np.random.default_rng(1).normal(size=(50, 3))
        save_csv(Projection(y), tmp_path / "p.csv")
        back = load_projection(tmp_path / "p.csv")
        assert back.labels is None
        np.testing.assert_allclose(back.coords, y, rtol=0, atol=1e-12)

    def test_empty_projection_writes_nothing(self, tmp_path):
        p = tmp_path / "p.csv"
        with pytest.raises(DataError):
            save_csv(Projection(np.zeros((0, 2))), p)
        assert not p.exists()

    def test_comment_lines_skipped(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("# k=5\na,b\n# mid\n1,2\n")
        np.testing.assert_array_equal(load_csv(p).points, [[1.0, 2.0]])


class TestGenerators:
    def test_swiss_roll_shape_and_radius(self):
        d = gen_swiss_roll(5000, seed=0)
        assert (d.n, d.dim) == (5000, 3)
        assert np.all(np.isfinite(d.points))
        x, z = d.points[:, 0], d.points[:, 2]
        t = np.hypot(x, z)
        # recover t from the angle and check the radius equals it
        angle = np.mod(np.arctan2(z, x), 2 * np.pi)
        turns = np.round((t - angle) / (2 * np.pi))
        np.testing.assert_allclose(angle + 2 * np.pi * turns, t, atol=1e-9)
        assert np.all((t >= 1.5 * np.pi) & (t <= 4.5 * np.pi))
        assert set(np.unique(d.labels)) == {0, 1, 2, 3}

    def test_swiss_roll_deterministic(self):
        np.testing.assert_array_equal(gen_swiss_roll(300, 4).points, gen_swiss_roll(300, 4).points)

    def test_s_curve_bounds(self):
        d = gen_s_curve(5000, seed=0)
        assert (d.n, d.dim) == (5000, 3)
        assert np.abs(d.points[:, 0]).max() <= 1.0
        assert np.abs(d.points[:, 2]).max() <= 2.0
        assert np.all((d.points[:, 1] >= 0) & (d.points[:, 1] <= 2))

    def test_s_curve_parameterization(self):
        # x = sin t pins t; z must equal sign(t)(cos t - 1)
        d = gen_s_curve(2000, seed=2).points
        x, z = d[:, 0], d[:, 2]
        # |z| = 1 - cos t >= 0 with the sign of t, and x^2 + (|z| - 1)^2 = 1
        np.testing.assert_allclose(x**2 + (np.abs(z) - 1.0) ** 2, 1.0, atol=1e-12)

    def test_spheres_defaults(self):
        d = gen_spheres()
        assert (d.n, d.dim) == (10000, 101)
        assert len(np.unique(d.labels)) == 11

    def test_outer_sphere_radius(self):
        d = gen_spheres(3, 50, 400, dim=101, seed=1)
        outer = d.points[d.labels == 3]
        np.testing.assert_allclose(np.linalg.norm(outer, axis=1), 25.0, atol=1e-9)

    def test_inner_spheres_on_radius_around_center(self):
        d, centers = gen_spheres(4, 500, 10, dim=20, seed=5, return_centers=True)
        for s in range(4):
            pts = d.points[d.labels == s]
            np.testing.assert_allclose(np.linalg.norm(pts - centers[s], axis=1), 5.0, atol=1e-9)
            bound = 3 * 5.0 / math.sqrt(500)
            assert np.all(np.abs(pts.mean(axis=0) - centers[s]) <= bound)

    def test_inner_spheres_inside_outer(self):
        d, centers = gen_spheres(10, 20, 10, seed=0, return_centers=True)
        assert np.linalg.norm(centers, axis=1).max() + 5.0 < 25.0

    def test_no_inner_spheres(self):
        d = gen_spheres(0, 500, 100, dim=5)
        assert d.n == 100
        np.testing.assert_array_equal(np.unique(d.labels), [0])

    def test_dim_too_small(self):
        with pytest.raises(DataError):
            gen_spheres(dim=1)


class TestMammoth:
    def test_ten_thousand_rows(self, tmp_path):
        pts = np.random.default_rng(0).normal(size=(10000, 3))
        save_csv(Dataset(pts), tmp_path / "m.csv")
        d = load_mammoth(tmp_path / "m.csv")
        assert d.n == 10000
        np.testing.assert_array_equal(d.points, pts)

    def test_four_columns_rejected(self, tmp_path):
        save_csv(Dataset(np.ones((5, 4))), tmp_path / "m.csv")
        with pytest.raises(DataError, match="expected 3 dimensions"):
            load_mammoth(tmp_path / "m.csv")

    def test_label_column_used(self, tmp_path):
        save_csv(Dataset(np.ones((5, 3)), labels=np.arange(5)), tmp_path / "m.csv")
        d = load_mammoth(tmp_path / "m.csv")
        np.testing.assert_array_equal(d.labels, np.arange(5))
