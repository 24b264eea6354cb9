from pathlib import Path

import numpy as np
import pytest

from src.core.data_model import make_dataset, make_table
from src.core.errors import InputValidationError
from src.core.similarity import (
    class_order,
    distance_matrix,
    export_heatmap_csv,
    export_heatmap_pgm,
    feature_panel,
    group_contrast,
    load_heatmap_csv,
    to_gray_levels,
)


def table_from(X):
    n, p = X.shape
    return make_table(
        features=X,
        feature_names=tuple(f"f{j}" for j in range(p)),
        sample_names=tuple(f"s{i}" for i in range(n)),
    )


def clustered(seed, n_per_class=10, p=6, gap=8.0, scale=1.0):
    rng = np.random.default_rng(seed)
    labels = np.repeat([0, 1], n_per_class)
    X = rng.normal(scale=scale, size=(2 * n_per_class, p))
    X[labels == 1] += gap
    return make_dataset(
        features=X,
        labels=labels,
        feature_names=tuple(f"f{j}" for j in range(p)),
        sample_names=tuple(f"s{i:02d}" for i in range(2 * n_per_class)),
        class_names=("a", "b"),
    )


class TestDistanceMatrix:

    def test_three_four_five(self):
        dm = distance_matrix(table_from(np.array([[0.0, 0.0], [3.0, 4.0]])))
        assert dm.values.tolist() == [[0.0, 5.0], [5.0, 0.0]]
        assert dm.feature_subset_label == "all"

    def test_identical_rows(self):
        dm = distance_matrix(table_from(np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]])))
        assert dm.values[0, 1] == 0.0
        assert np.array_equal(dm.values, dm.values.T)

    def test_subset_never_exceeds_full(self):
        X = np.random.default_rng(3).normal(size=(12, 8))
        full = distance_matrix(table_from(X))
        part = distance_matrix(table_from(X), subset=[1, 4, 6], label="selected")
        assert np.all(part.values <= full.values + 1e-12)
        assert part.feature_subset_label == "selected"

    @pytest.mark.parametrize("subset", [[], [9]])
    def test_invalid_subset(self, subset):
        with pytest.raises(InputValidationError):
            distance_matrix(table_from(np.eye(3)), subset=subset)


class TestGroupContrast:

    def test_separated_clusters(self):
        d = clustered(seed=1)
        assert group_contrast(distance_matrix(d), d.labels) > 3.0

    def test_shuffled_labels_near_one(self):
        """Random class assignment: between and within distances share a distribution"""
        rng = np.random.default_rng(0)
        X = rng.normal(size=(40, 10))
        dm = distance_matrix(table_from(X))
        ratios = [group_contrast(dm, rng.permutation(np.repeat([0, 1], 20))) for _ in range(200)]
        se = np.std(ratios, ddof=1) / np.sqrt(len(ratios))
        assert abs(np.mean(ratios) - 1.0) < 3 * se + 0.01

    def test_single_class(self):
        dm = distance_matrix(table_from(np.eye(3)))
        with pytest.raises(InputValidationError, match="one class"):
            group_contrast(dm, [0, 0, 0])

    def test_all_singletons(self):
        dm = distance_matrix(table_from(np.eye(3)))
        with pytest.raises(InputValidationError, match="single member"):
            group_contrast(dm, [0, 1, 2])

    def test_label_count_mismatch(self):
        dm = distance_matrix(table_from(np.eye(3)))
        with pytest.raises(InputValidationError):
            group_contrast(dm, [0, 1])


class TestHeatmapCsv:

    def test_exact_bytes(self, temp_dir):
        path = export_heatmap_csv(np.eye(2), ["a", "b"], ["a", "b"], Path(temp_dir) / "m.csv")
        assert path.read_bytes() == b",a,b\na,1,0\nb,0,1\n"

    def test_full_precision_round_trip(self, temp_dir):
        matrix = np.random.default_rng(5).normal(size=(3, 4)) / 7.0
        rows, cols = ["r0", "r1", "r2"], ["c0", "c1", "c2", "c3"]
        path = export_heatmap_csv(matrix, rows, cols, Path(temp_dir) / "m.csv")
        values, back_rows, back_cols = load_heatmap_csv(path)
        assert np.array_equal(values, matrix)
        assert back_rows == tuple(rows)
        assert back_cols == tuple(cols)

    def test_reorder_square_matrix(self, temp_dir):
        names = ["s2", "s0", "s1"]
        labels = [1, 0, 0]
        matrix = np.arange(9.0).reshape(3, 3)
        path = export_heatmap_csv(matrix, names, names, Path(temp_dir) / "m.csv", labels=labels, reorder=True)
        values, rows, cols = load_heatmap_csv(path)
        assert rows == ("s0", "s1", "s2")
        assert cols == rows
        assert values[0, 0] == matrix[1, 1]
        assert values[2, 0] == matrix[0, 1]

    def test_reorder_needs_labels(self, temp_dir):
        with pytest.raises(InputValidationError):
            export_heatmap_csv(np.eye(2), ["a", "b"], ["a", "b"], Path(temp_dir) / "m.csv", reorder=True)

    def test_shape_mismatch(self, temp_dir):
        with pytest.raises(InputValidationError):
            export_heatmap_csv(np.eye(2), ["a"], ["a", "b"], Path(temp_dir) / "m.csv")

    def test_class_order(self):
        assert class_order([1, 0, 1, 0], ["d", "c", "a", "b"]).tolist() == [3, 1, 2, 0]


class TestFeaturePanel:

    def test_selected_columns_first_rows_by_class(self, tiny_dataset):
        matrix, rows, cols = feature_panel(tiny_dataset, [2])
        assert cols == ("f2", "f0", "f1")
        order = class_order(tiny_dataset.labels, tiny_dataset.sample_names)
        assert rows == tuple(tiny_dataset.sample_names[i] for i in order)
        assert np.array_equal(matrix[:, 0], tiny_dataset.features[order, 2])

    def test_duplicate_selection(self, tiny_dataset):
        with pytest.raises(InputValidationError):
            feature_panel(tiny_dataset, [0, 0])

    def test_unlabeled_rows_keep_file_order(self, tiny_dataset):
        table = make_table(
            features=tiny_dataset.features[::-1],
            feature_names=tiny_dataset.feature_names,
            sample_names=tiny_dataset.sample_names[::-1],
        )
        matrix, rows, cols = feature_panel(table, [1])
        assert rows == table.sample_names
        assert cols == ("f1", "f0", "f2")
        assert np.array_equal(matrix[:, 0], table.features[:, 1])


class TestPgm:

    def test_gray_levels(self):
        levels = to_gray_levels(np.array([[0.0, 1.0], [2.0, 4.0]]))
        assert levels.tolist() == [[255, 191], [128, 0]]

    def test_constant_matrix_is_white(self):
        assert np.all(to_gray_levels(np.full((2, 3), 7.0)) == 255)

    def test_file_layout(self, temp_dir):
        path = export_heatmap_pgm(np.array([[0.0, 1.0, 2.0], [2.0, 1.0, 0.0]]), Path(temp_dir) / "m.pgm")
        data = path.read_bytes()
        header = b"P5\n3 2\n255\n"
        assert data.startswith(header)
        assert list(data[len(header):]) == [255, 128, 0, 0, 128, 255]
