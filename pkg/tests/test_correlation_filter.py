import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from src.core.correlation_filter import (
    DEFAULT_THRESHOLDS,
    correlation_filter,
    pearson_r,
    sweep_correlation_thresholds,
)
from src.core.data_model import make_dataset, standardize, stratified_half_split, synth_planted, take_samples
from src.core.errors import InputValidationError, UndefinedCorrelationError
from src.core.kernels import RBF
from src.core.svm_core import predict_multiclass, train_multiclass


def dataset_from(X, labels=None):
    n, p = X.shape
    labels = np.arange(n) % 2 if labels is None else labels
    return make_dataset(
        features=X,
        labels=labels,
        feature_names=tuple(f"f{j}" for j in range(p)),
        sample_names=tuple(f"s{i}" for i in range(n)),
        class_names=("a", "b"),
    )


def oracle_filter(X, threshold):
    """Plain double loop over pairs with the same removal rule"""
    p = X.shape[1]
    means = X.mean(axis=0)
    active = [True] * p
    for i in range(p):
        for j in range(i + 1, p):
            if not (active[i] and active[j]):
                continue
            if np.ptp(X[:, i]) == 0 or np.ptp(X[:, j]) == 0:
                continue
            r = np.corrcoef(X[:, i], X[:, j])[0, 1]
            if abs(r) > threshold:
                if means[i] > means[j]:
                    active[i] = False
                else:
                    active[j] = False
    return [j for j in range(p) if active[j]]


class TestPearson:

    def test_perfect_positive(self):
        assert pearson_r([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0, abs=1e-12)

    def test_perfect_negative(self):
        assert pearson_r([1, 2, 3], [6, 4, 2]) == pytest.approx(-1.0, abs=1e-12)

    def test_half(self):
        assert pearson_r([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5, abs=1e-12)

    def test_constant_vector(self):
        with pytest.raises(UndefinedCorrelationError):
            pearson_r([1, 1, 1], [1, 2, 3])

    def test_length_mismatch(self):
        with pytest.raises(InputValidationError):
            pearson_r([1, 2], [1, 2, 3])

    @pytest.mark.property
    @given(
        x=st.lists(st.floats(min_value=-100, max_value=100), min_size=3, max_size=20),
        a=st.floats(min_value=0.1, max_value=10),
        negative=st.booleans(),
        c=st.floats(min_value=-50, max_value=50),
    )
    @settings(max_examples=60, deadline=None)
    def test_affine_image_is_perfectly_correlated(self, x, a, negative, c):
        x = np.array(x)
        assume(np.ptp(x) > 1.0)
        slope = -a if negative else a
        r = pearson_r(x, slope * x + c)
        assert r == pytest.approx(np.sign(slope), abs=1e-12)


class TestCorrelationFilter:

    def test_identical_columns_drop_larger_index(self):
        rng = np.random.default_rng(0)
        column = rng.normal(size=8)
        X = np.column_stack([column, rng.normal(size=8), column])
        result = correlation_filter(dataset_from(X), 0.9)
        assert result.removed == (2,)
        assert result.kept == (0, 1)
        assert result.removal_log[0].pair == (0, 2)

    def test_higher_mean_is_removed(self):
        base = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        X = np.column_stack([base + 10.0, base])
        result = correlation_filter(dataset_from(X), 0.9)
        assert result.removed == (0,)

    def test_weak_correlations_keep_everything(self):
        X = np.array([
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 1.0, 1.0],
        ])
        result = correlation_filter(dataset_from(X), 0.9)
        assert result.removed == ()
        assert result.kept == (0, 1, 2)

    def test_removed_feature_no_longer_compared(self):
        """f1 is removed by f0, so its correlation with f2 must not remove f2"""
        t = np.arange(8.0) - 3.5
        u = (-1.0) ** np.arange(8)
        u = u - (u @ t) / (t @ t) * t
        u *= np.linalg.norm(t) / np.linalg.norm(u)
        X = np.column_stack([t, t + 0.3 * u + 5.0, t + u + 10.0])
        # r01 ~ 0.958, r12 ~ 0.880, r02 ~ 0.707
        assert np.corrcoef(X[:, 1], X[:, 2])[0, 1] > 0.85
        assert np.corrcoef(X[:, 0], X[:, 2])[0, 1] < 0.85
        result = correlation_filter(dataset_from(X), 0.85)
        assert result.removed == (1,)
        assert result.kept == (0, 2)

    def test_constant_column_is_kept(self):
        X = np.column_stack([np.arange(6.0), np.full(6, 2.0), np.arange(6.0) * 2])
        result = correlation_filter(dataset_from(X), 0.9)
        assert 1 in result.kept
        assert result.removed == (2,)

    @pytest.mark.parametrize("threshold", [0.0, 1.0, 1.5])
    def test_threshold_range(self, threshold):
        with pytest.raises(InputValidationError):
            correlation_filter(dataset_from(np.eye(4)), threshold)

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_double_loop_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 12))
        p = int(rng.integers(2, 31))
        latent = rng.normal(size=(n, 3))
        X = latent @ rng.normal(size=(3, p)) + rng.normal(scale=0.3, size=(n, p)) + rng.normal(size=p) * 3
        threshold = float(rng.uniform(0.5, 0.95))
        result = correlation_filter(dataset_from(X), threshold)
        assert list(result.kept) == oracle_filter(X, threshold)


class TestThresholdSweep:

    @pytest.fixture
    def halves(self):
        d, _ = synth_planted(n=40, p=15, n_informative=4, effect=2.5, seed=21)
        split = stratified_half_split(d, seed=3)
        return take_samples(d, split.train), take_samples(d, split.test)

    def test_default_thresholds(self):
        assert DEFAULT_THRESHOLDS == (0.7, 0.75, 0.8, 0.85, 0.9, 0.95)

    def test_one_entry_per_threshold(self, halves):
        train, test = halves
        sweep = sweep_correlation_thresholds(train, test)
        assert [e.threshold for e in sweep.entries] == list(DEFAULT_THRESHOLDS)
        assert 0.0 <= sweep.best_accuracy <= 1.0

    def test_best_follows_tie_rules(self, halves):
        train, test = halves
        sweep = sweep_correlation_thresholds(train, test)
        top = max(e.accuracy for e in sweep.entries)
        contenders = [e for e in sweep.entries if e.accuracy == top]
        fewest = min(e.n_kept for e in contenders)
        assert sweep.best_threshold == min(e.threshold for e in contenders if e.n_kept == fewest)
        assert len(sweep.best_kept) == fewest

    def test_near_one_threshold_equals_unreduced_svm(self, halves):
        train, test = halves
        sweep = sweep_correlation_thresholds(train, test, thresholds=[0.999999])
        assert sweep.best_kept == tuple(range(train.p))
        fit, stats = standardize(train)
        evaluate, _ = standardize(test, stats)
        model = train_multiclass(fit, RBF)
        expected = float(np.mean(predict_multiclass(model, evaluate.features) == evaluate.labels))
        assert sweep.best_accuracy == expected

    def test_empty_threshold_list(self, halves):
        train, test = halves
        with pytest.raises(InputValidationError):
            sweep_correlation_thresholds(train, test, thresholds=[])
