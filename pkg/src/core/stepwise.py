import logging
from fractions import Fraction
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from ..models.schemas import CandidateEvaluation, Dataset, FeatureScore, KernelSpec, SelectionResult
from .data_model import make_dataset, stratified_folds
from .errors import InputValidationError, SolverError
from .kernels import RBF
from .parallel import parallel_map
from .svm_core import DEFAULT_MAX_ITER, fit_multiclass, predict_multiclass

logger = logging.getLogger(__name__)


def score_features(
    train: Dataset,
    spec: KernelSpec = RBF,
    C: float = 1.0,
    tol: float = 1e-3,
    max_iter: int = DEFAULT_MAX_ITER,
    threads: int = 1,
) -> List[FeatureScore]:
    """
    Train one multiclass SVM per feature and return its apparent error rate,
    in feature-index order. Constant features get the majority-rule APR
    (n - largest class count) without running the solver.
    """
    X, labels, n = train.features, train.labels, train.n
    majority_errors = n - int(train.class_counts().max())

    def score(j: int) -> FeatureScore:
        column = X[:, [j]]
        if np.ptp(column) == 0:
            return FeatureScore(feature_index=j, errors=majority_errors, n_train=n)
        try:
            model = fit_multiclass(column, labels, train.k, spec, C, tol, max_iter)
        except SolverError as e:
            e.feature_index = j
            raise
        errors = int(np.sum(predict_multiclass(model, column) != labels))
        return FeatureScore(feature_index=j, errors=errors, n_train=n)

    scores = parallel_map(score, range(train.p), threads)
    logger.info("Scored %d features on %d training samples", train.p, n)
    return scores


def sort_scores(scores: Sequence[FeatureScore]) -> List[FeatureScore]:
    return sorted(scores, key=lambda s: (s.apr_fraction, s.feature_index))


def threshold_candidates(scores: Sequence[FeatureScore]) -> List[Fraction]:
    """Distinct APR values, ascending; each one yields a distinct subset {apr <= t}"""
    if not scores:
        raise InputValidationError("No feature scores to threshold")
    return sorted({s.apr_fraction for s in scores})


def subset_at(scores: Sequence[FeatureScore], threshold: Fraction) -> List[int]:
    return sorted(s.feature_index for s in scores if s.apr_fraction <= threshold)


def _cross_validated_correct(
    train: Dataset,
    subset: Sequence[int],
    spec: KernelSpec,
    C: float,
    folds: Sequence,
    tol: float,
    max_iter: int,
) -> int:
    X = train.features[:, list(subset)]
    correct = 0
    for fit_idx, held_idx in folds:
        model = fit_multiclass(X[fit_idx], train.labels[fit_idx], train.k, spec, C, tol, max_iter)
        correct += int(np.sum(predict_multiclass(model, X[held_idx]) == train.labels[held_idx]))
    return correct


def select_features(
    train: Dataset,
    spec_select: KernelSpec = RBF,
    spec_predict: KernelSpec = RBF,
    C: float = 1.0,
    folds: int = 5,
    seed: int = 0,
    threshold: Optional[Fraction] = None,
    tol: float = 1e-3,
    max_iter: int = DEFAULT_MAX_ITER,
    threads: int = 1,
) -> SelectionResult:
    """
    Stepwise SVM selection on training data only.

    Every candidate APR threshold is scored by stratified ``folds``-fold
    cross-validation of a ``spec_predict`` SVM on the retained features. The
    winner has the highest accuracy, then the fewest features, then the lowest
    threshold. A fixed ``threshold`` skips the search and evaluates that subset.
    """
    fold_indices = stratified_folds(train.labels, folds, seed)
    scores = score_features(train, spec_select, C, tol, max_iter, threads)

    if threshold is None:
        candidates = threshold_candidates(scores)
        mode = "cv"
    else:
        candidates = [Fraction(threshold)]
        mode = "fixed"

    def evaluate(t: Fraction) -> CandidateEvaluation:
        subset = subset_at(scores, t)
        if not subset:
            raise InputValidationError(f"APR threshold {t} keeps no features")
        correct = _cross_validated_correct(train, subset, spec_predict, C, fold_indices, tol, max_iter)
        logger.debug("threshold %s keeps %d features, CV accuracy %d/%d", t, len(subset), correct, train.n)
        return CandidateEvaluation(threshold=t, subset_size=len(subset), correct=correct, evaluated=train.n)

    trace = parallel_map(evaluate, candidates, threads)
    best = min(trace, key=lambda c: (-c.correct, c.subset_size, c.threshold))
    selected = subset_at(scores, best.threshold)
    logger.info(
        "Selected %d of %d features at APR threshold %s (CV accuracy %.4f)",
        len(selected), train.p, best.threshold, best.validation_accuracy,
    )
    return SelectionResult(
        scores=tuple(sort_scores(scores)),
        chosen_threshold=best.threshold,
        selected=tuple(selected),
        selected_names=tuple(train.feature_names[j] for j in selected),
        validation_accuracy=best.validation_accuracy,
        candidate_trace=tuple(trace),
        mode=mode,
        folds=folds,
        seed=seed,
    )


class StepwiseSelector:
    """Stepwise SVM selection engine holding the kernels and solver settings"""

    def __init__(
        self,
        spec_select: KernelSpec = RBF,
        spec_predict: KernelSpec = RBF,
        C: float = 1.0,
        folds: int = 5,
        tol: float = 1e-3,
        max_iter: int = DEFAULT_MAX_ITER,
        threads: int = 1,
    ):
        self.spec_select = spec_select
        self.spec_predict = spec_predict
        self.C = C
        self.folds = folds
        self.tol = tol
        self.max_iter = max_iter
        self.threads = threads

    def score(self, train: Dataset) -> List[FeatureScore]:
        return score_features(train, self.spec_select, self.C, self.tol, self.max_iter, self.threads)

    def select(self, train: Dataset, seed: int = 0, threshold: Optional[Fraction] = None) -> SelectionResult:
        return select_features(
            train,
            spec_select=self.spec_select,
            spec_predict=self.spec_predict,
            C=self.C,
            folds=self.folds,
            seed=seed,
            threshold=threshold,
            tol=self.tol,
            max_iter=self.max_iter,
            threads=self.threads,
        )


def reduce(d: Dataset, selected: Sequence[int]) -> Dataset:
    """Column subset in the given order, keeping sample order and names"""
    idx = [int(j) for j in selected]
    if not idx:
        raise InputValidationError("Cannot reduce to an empty feature set")
    if len(set(idx)) != len(idx):
        raise InputValidationError("Selected feature indices must be distinct")
    bad = [j for j in idx if not 0 <= j < d.p]
    if bad:
        raise InputValidationError(f"Feature indices out of range 0..{d.p - 1}: {bad}")
    return make_dataset(
        features=d.features[:, idx],
        labels=d.labels,
        feature_names=tuple(d.feature_names[j] for j in idx),
        sample_names=d.sample_names,
        class_names=d.class_names,
    )


def write_selection_report(result: SelectionResult, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(result.model_dump_json(indent=2) + "\n")
    return path


def read_selection_report(path: Union[str, Path]) -> SelectionResult:
    return SelectionResult.model_validate_json(Path(path).read_text())
