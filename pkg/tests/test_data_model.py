import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.core.data_model import (
    dataset_digest,
    derive_seed,
    load_csv,
    load_feature_table,
    make_dataset,
    save_csv,
    split_digest,
    standardize,
    stratified_folds,
    stratified_half_split,
    synth_planted,
)
from src.core.errors import CsvParseError, InputValidationError


class TestLoadCsv:
    """CSV ingestion in both orientations"""

    def test_samples_as_rows(self, sample_csv_path):
        d = load_csv(sample_csv_path)
        assert (d.n, d.p, d.k) == (4, 3, 2)
        assert d.feature_names == ("g1", "g2", "g3")
        assert d.class_names == ("tumor", "normal")
        assert d.labels.tolist() == [0, 1, 0, 1]
        assert d.features[2, 1] == 2.2

    def test_features_as_rows_transposes(self, temp_dir):
        path = Path(temp_dir) / "genes.csv"
        path.write_text(
            "label,A,B,A,B\n"
            "g1,1,2,3,4\n"
            "g2,5,6,7,8\n"
        )
        d = load_csv(path, orientation="features_as_rows")
        assert (d.n, d.p) == (4, 2)
        assert d.feature_names == ("g1", "g2")
        assert d.features[:, 0].tolist() == [1, 2, 3, 4]
        assert d.labels.tolist() == [0, 1, 0, 1]

    def test_named_label_and_id_columns(self, temp_dir):
        path = Path(temp_dir) / "named.csv"
        path.write_text(
            "id,x,class,y\n"
            "p1,1.0,b,2.0\n"
            "p2,3.0,a,4.0\n"
        )
        d = load_csv(path, label_column="class", id_column="id")
        assert d.sample_names == ("p1", "p2")
        assert d.feature_names == ("x", "y")
        assert d.class_names == ("b", "a")

    def test_nan_rejected_with_position(self, temp_dir):
        path = Path(temp_dir) / "nan.csv"
        path.write_text(
            "label,g1,g2\n"
            "a,1,2\n"
            "b,NaN,3\n"
        )
        with pytest.raises(CsvParseError) as excinfo:
            load_csv(path)
        assert excinfo.value.line == 3
        assert excinfo.value.column == 2

    def test_non_numeric_cell_rejected(self, temp_dir):
        path = Path(temp_dir) / "text.csv"
        path.write_text(
            "label,g1\n"
            "a,1\n"
            "b,high\n"
        )
        with pytest.raises(CsvParseError, match="line 3, column 2"):
            load_csv(path)

    def test_short_row_reports_line(self, temp_dir):
        path = Path(temp_dir) / "ragged.csv"
        path.write_text(
            "label,g1,g2\n"
            "a,1,2\n"
            "b,3\n"
        )
        with pytest.raises(CsvParseError) as excinfo:
            load_csv(path)
        assert excinfo.value.line == 3

    def test_single_class_file_rejected(self, temp_dir):
        path = Path(temp_dir) / "one.csv"
        path.write_text("label,g1\na,1\na,2\n")
        with pytest.raises(InputValidationError, match="single-class"):
            load_csv(path)

    def test_missing_file_is_os_error(self, temp_dir):
        with pytest.raises(FileNotFoundError):
            load_csv(Path(temp_dir) / "absent.csv")

    def test_unknown_label_column(self, sample_csv_path):
        with pytest.raises(InputValidationError, match="not found"):
            load_csv(sample_csv_path, label_column="status")

    def test_feature_table_without_labels(self, temp_dir):
        path = Path(temp_dir) / "plain.csv"
        path.write_text("g1,g2\n1,2\n3,4\n5,6\n")
        table = load_feature_table(path)
        assert (table.n, table.p) == (3, 2)


class TestSaveCsv:
    """save_csv writes what load_csv reads back"""

    @pytest.mark.parametrize("orientation", ["samples_as_rows", "features_as_rows"])
    def test_reload_identity(self, temp_dir, orientation):
        d, _ = synth_planted(n=8, p=5, n_informative=2, seed=3)
        path = save_csv(d, Path(temp_dir) / "d.csv", orientation=orientation)
        back = load_csv(path, orientation=orientation, label_column="label", id_column="sample")
        assert np.array_equal(back.features, d.features)
        assert [back.class_names[c] for c in back.labels] == [d.class_names[c] for c in d.labels]
        assert back.feature_names == d.feature_names
        assert back.sample_names == d.sample_names

    def test_digest_tracks_content(self, tiny_dataset):
        z, _ = standardize(tiny_dataset)
        assert dataset_digest(tiny_dataset) == dataset_digest(tiny_dataset)
        assert dataset_digest(z) != dataset_digest(tiny_dataset)


class TestDatasetInvariants:

    def test_duplicate_feature_names(self):
        with pytest.raises(InputValidationError, match="unique"):
            make_dataset(
                features=np.zeros((2, 2)),
                labels=np.array([0, 1]),
                feature_names=("a", "a"),
                sample_names=("s0", "s1"),
                class_names=("x", "y"),
            )

    def test_missing_class_id(self):
        with pytest.raises(InputValidationError):
            make_dataset(
                features=np.zeros((3, 1)),
                labels=np.array([0, 0, 2]),
                feature_names=("a",),
                sample_names=("s0", "s1", "s2"),
                class_names=("x", "y", "z"),
            )

    def test_features_are_read_only(self, tiny_dataset):
        with pytest.raises(ValueError):
            tiny_dataset.features[0, 0] = 1.0


class TestStratifiedHalfSplit:

    def test_class_counts_ceil(self):
        labels = np.array([0] * 5 + [1] * 4 + [2] * 3)
        d = make_dataset(
            features=np.arange(12, dtype=float)[:, None],
            labels=labels,
            feature_names=("f",),
            sample_names=tuple(f"s{i}" for i in range(12)),
            class_names=("a", "b", "c"),
        )
        split = stratified_half_split(d, seed=9)
        train_counts = np.bincount(labels[split.train], minlength=3)
        assert train_counts.tolist() == [3, 2, 2]
        assert sorted(np.concatenate([split.train, split.test]).tolist()) == list(range(12))

    def test_seed_determinism(self, planted_small):
        d, _ = planted_small
        a = stratified_half_split(d, seed=123)
        b = stratified_half_split(d, seed=123)
        assert split_digest(a) == split_digest(b)
        c = stratified_half_split(d, seed=124)
        assert split_digest(a) != split_digest(c)

    def test_singleton_class_rejected(self):
        d = make_dataset(
            features=np.zeros((3, 1)),
            labels=np.array([0, 0, 1]),
            feature_names=("f",),
            sample_names=("s0", "s1", "s2"),
            class_names=("a", "b"),
        )
        with pytest.raises(InputValidationError):
            stratified_half_split(d, seed=0)

    @pytest.mark.property
    @given(
        counts=st.lists(st.integers(min_value=2, max_value=9), min_size=2, max_size=4),
        seed=st.integers(min_value=0, max_value=2**64 - 1),
    )
    @settings(max_examples=40, deadline=None)
    def test_partition_property(self, counts, seed):
        labels = np.repeat(np.arange(len(counts)), counts)
        n = labels.size
        d = make_dataset(
            features=np.zeros((n, 1)),
            labels=labels,
            feature_names=("f",),
            sample_names=tuple(f"s{i}" for i in range(n)),
            class_names=tuple(f"c{c}" for c in range(len(counts))),
        )
        split = stratified_half_split(d, seed)
        assert np.intersect1d(split.train, split.test).size == 0
        assert split.train.size + split.test.size == n
        for c, count in enumerate(counts):
            assert np.sum(labels[split.train] == c) == math.ceil(count / 2)


class TestStratifiedFolds:

    def test_folds_cover_every_sample_once(self):
        labels = np.array([0] * 10 + [1] * 10)
        folds = stratified_folds(labels, 5, seed=1)
        held = np.concatenate([test for _, test in folds])
        assert sorted(held.tolist()) == list(range(20))
        for train, test in folds:
            assert np.bincount(labels[test]).tolist() == [2, 2]

    def test_too_few_members(self):
        with pytest.raises(InputValidationError):
            stratified_folds(np.array([0, 0, 0, 1, 1]), 3, seed=0)


class TestStandardize:

    def test_training_statistics(self, tiny_dataset):
        z, stats = standardize(tiny_dataset)
        assert np.allclose(z.features.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(z.features.std(axis=0, ddof=1), 1.0)
        assert stats.constant == (False, False, False)

    def test_test_set_uses_given_stats(self, tiny_dataset):
        _, stats = standardize(tiny_dataset)
        again, _ = standardize(tiny_dataset, stats)
        expected = (tiny_dataset.features - stats.mean) / stats.sd
        assert np.allclose(again.features, expected)

    def test_constant_column_maps_to_zero(self):
        d = make_dataset(
            features=np.array([[1.0, 7.0], [2.0, 7.0], [3.0, 7.0]]),
            labels=np.array([0, 1, 1]),
            feature_names=("a", "b"),
            sample_names=("s0", "s1", "s2"),
            class_names=("x", "y"),
        )
        z, stats = standardize(d)
        assert stats.constant == (False, True)
        assert np.all(z.features[:, 1] == 0.0)

    def test_original_is_untouched(self, tiny_dataset):
        before = tiny_dataset.features.copy()
        standardize(tiny_dataset)
        assert np.array_equal(tiny_dataset.features, before)


class TestSynthPlanted:

    def test_shapes_and_truth(self):
        d, informative = synth_planted(n=20, p=50, n_informative=5, k=2, effect=2.0, seed=4)
        assert (d.n, d.p, d.k) == (20, 50, 2)
        assert len(informative) == 5
        assert list(informative) == sorted(informative)
        assert d.class_counts().tolist() == [10, 10]

    def test_same_seed_same_data(self):
        a, ta = synth_planted(n=10, p=12, n_informative=3, seed=8)
        b, tb = synth_planted(n=10, p=12, n_informative=3, seed=8)
        assert np.array_equal(a.features, b.features)
        assert ta == tb

    def test_informative_means_shift(self):
        d, informative = synth_planted(n=400, p=6, n_informative=2, k=2, effect=2.0, seed=2)
        j = informative[0]
        gap = d.features[d.labels == 1, j].mean() - d.features[d.labels == 0, j].mean()
        assert abs(gap - 2.0) < 0.4

    def test_invalid_informative_count(self):
        with pytest.raises(InputValidationError):
            synth_planted(n=10, p=3, n_informative=4)


class TestSeeds:

    def test_derive_seed_is_stable_and_distinct(self):
        assert derive_seed(42, 0) == derive_seed(42, 0)
        assert derive_seed(42, 0) != derive_seed(42, 1)
        assert 0 <= derive_seed(42, 0) < 2**64
