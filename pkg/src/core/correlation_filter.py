import logging
from typing import List, Sequence

import numpy as np
from scipy.stats import pearsonr

from ..models.schemas import (
    CorrelationFilterResult,
    CorrelationRemoval,
    Dataset,
    KernelSpec,
    SweepEntry,
    ThresholdSweep,
)
from .data_model import standardize
from .errors import InputValidationError, UndefinedCorrelationError
from .kernels import RBF
from .stepwise import reduce
from .svm_core import DEFAULT_MAX_ITER, predict_multiclass, train_multiclass

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = (0.7, 0.75, 0.8, 0.85, 0.9, 0.95)


def pearson_r(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise InputValidationError("pearson_r needs two vectors of equal length >= 2")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedCorrelationError("Correlation is undefined for a constant vector")
    r = pearsonr(x, y)[0]
    return float(np.clip(r, -1.0, 1.0))


def _unit_columns(X: np.ndarray) -> np.ndarray:
    """Columns scaled so that Z_i . Z_j is the Pearson r; constant columns become 0"""
    centered = X - X.mean(axis=0)
    norms = np.sqrt(np.sum(centered * centered, axis=0))
    constant = np.ptp(X, axis=0) == 0
    norms[constant] = 1.0
    Z = centered / norms
    Z[:, constant] = 0.0
    return Z


def correlation_filter(train: Dataset, threshold: float) -> CorrelationFilterResult:
    """
    Scan pairs (i, j), i < j, lexicographically over still-active features. When
    |r| > threshold the member with the larger mean is removed (equal means: the
    larger index); removed features take no further part. Constant features are
    treated as uncorrelated with everything.
    """
    if not 0 < threshold < 1:
        raise InputValidationError("Correlation threshold must lie in (0, 1)")
    X = train.features
    p = train.p
    means = X.mean(axis=0)
    Z = _unit_columns(X)
    active = np.ones(p, dtype=bool)
    log: List[CorrelationRemoval] = []

    for i in range(p - 1):
        if not active[i]:
            continue
        r = np.clip(Z[:, i] @ Z[:, i + 1:], -1.0, 1.0)
        partners = np.flatnonzero(active[i + 1:] & (np.abs(r) > threshold))
        for offset in partners:
            j = i + 1 + int(offset)
            loser = i if means[i] > means[j] else j
            active[loser] = False
            log.append(CorrelationRemoval(pair=(i, j), removed_index=loser, abs_r=float(abs(r[offset]))))
            if loser == i:
                break

    kept = tuple(int(j) for j in np.flatnonzero(active))
    removed = tuple(int(j) for j in np.flatnonzero(~active))
    logger.debug("Correlation filter at %.2f removed %d of %d features", threshold, len(removed), p)
    return CorrelationFilterResult(threshold=threshold, removed=removed, kept=kept, removal_log=tuple(log))


def sweep_correlation_thresholds(
    train: Dataset,
    test: Dataset,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    spec: KernelSpec = RBF,
    C: float = 1.0,
    standardize_features: bool = True,
    tol: float = 1e-3,
    max_iter: int = DEFAULT_MAX_ITER,
) -> ThresholdSweep:
    """
    Filter on the raw training data for each threshold, fit an SVM on the kept
    features (standardized with training statistics) and score it on ``test``.
    The best threshold follows the stepwise tie rules: accuracy, then fewer
    features, then the smaller threshold.
    """
    if not thresholds:
        raise InputValidationError("At least one correlation threshold is required")
    entries, kept_sets = [], {}
    for threshold in thresholds:
        result = correlation_filter(train, threshold)
        fit_data = reduce(train, result.kept)
        eval_data = reduce(test, result.kept)
        if standardize_features:
            fit_data, stats = standardize(fit_data)
            eval_data, _ = standardize(eval_data, stats)
        model = train_multiclass(fit_data, spec, C, tol, max_iter)
        correct = int(np.sum(predict_multiclass(model, eval_data.features) == eval_data.labels))
        entries.append(SweepEntry(threshold=threshold, n_kept=len(result.kept), accuracy=correct / test.n))
        kept_sets[threshold] = result.kept

    best = min(entries, key=lambda e: (-e.accuracy, e.n_kept, e.threshold))
    return ThresholdSweep(
        entries=tuple(entries),
        best_threshold=best.threshold,
        best_accuracy=best.accuracy,
        best_kept=kept_sets[best.threshold],
    )
