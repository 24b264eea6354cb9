"""
Random forest on Gini-split CART trees and recursive feature elimination driven
by forest importances.

Tree t of a forest seeded with ``seed`` draws its bootstrap and its node-level
feature sampling from ``derive_seed(seed, t)``, so the forest does not depend on
how trees are scheduled across threads.
"""

import logging
import math
from typing import List, Optional

import numpy as np
from sklearn.tree import DecisionTreeClassifier

from ..models.schemas import Dataset, ForestModel, RfeResult, RfeRound
from .data_model import derive_seed, make_generator
from .errors import InputValidationError
from .parallel import parallel_map
from .stepwise import reduce

logger = logging.getLogger(__name__)

DEFAULT_TREES = 500


def default_mtry(p: int) -> int:
    return max(1, math.isqrt(p))


def _grow_tree(train: Dataset, mtry: int, tree_seed: int):
    rng = make_generator(tree_seed)
    bootstrap = rng.integers(0, train.n, size=train.n)
    tree = DecisionTreeClassifier(
        criterion="gini",
        max_features=mtry,
        min_samples_split=2,
        random_state=int(rng.integers(0, 2**32, dtype=np.uint64)),
    )
    tree.fit(train.features[bootstrap], train.labels[bootstrap])
    return tree, np.sort(bootstrap)


def forest_train(
    train: Dataset,
    n_trees: int = DEFAULT_TREES,
    mtry: Optional[int] = None,
    seed: int = 0,
    threads: int = 1,
) -> ForestModel:
    if n_trees < 1:
        raise InputValidationError("n_trees must be >= 1")
    mtry = default_mtry(train.p) if mtry is None else mtry
    if not 1 <= mtry <= train.p:
        raise InputValidationError(f"mtry must lie in 1..{train.p}")

    grown = parallel_map(lambda t: _grow_tree(train, mtry, derive_seed(seed, t)), range(n_trees), threads)
    trees = tuple(tree for tree, _ in grown)

    # total weighted Gini decrease per feature, summed over trees
    decrease = np.zeros(train.p)
    for tree in trees:
        decrease += tree.tree_.compute_feature_importances(normalize=False)
    total = decrease.sum()
    importances = decrease / total if total > 0 else decrease

    return ForestModel(
        trees=trees,
        bootstrap_indices=tuple(idx for _, idx in grown),
        n_trees=n_trees,
        mtry=mtry,
        importances=importances,
        class_count=train.k,
        n_features=train.p,
        seed=seed,
    )


def _tree_predictions(model: ForestModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise InputValidationError(f"Expected {model.n_features} features, got {X.shape[1]}")
    return np.stack([tree.predict(X).astype(np.int64) for tree in model.trees])


def forest_votes(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """(m, k) vote counts; every row sums to n_trees"""
    predictions = _tree_predictions(model, X)
    votes = np.zeros((predictions.shape[1], model.class_count), dtype=np.int64)
    rows = np.broadcast_to(np.arange(predictions.shape[1]), predictions.shape)
    np.add.at(votes, (rows, predictions), 1)
    return votes


def forest_predict(model: ForestModel, X: np.ndarray) -> np.ndarray:
    return np.argmax(forest_votes(model, X), axis=1)


def forest_oob_accuracy(model: ForestModel, train: Dataset) -> float:
    """Hard-vote accuracy over trees not trained on each sample; never-OOB samples are skipped"""
    predictions = _tree_predictions(model, train.features)
    votes = np.zeros((train.n, model.class_count), dtype=np.int64)
    for t, bootstrap in enumerate(model.bootstrap_indices):
        oob = np.setdiff1d(np.arange(train.n), bootstrap, assume_unique=False)
        votes[oob, predictions[t, oob]] += 1
    covered = votes.sum(axis=1) > 0
    if not covered.any():
        logger.warning("No out-of-bag samples; OOB accuracy reported as 0")
        return 0.0
    predicted = np.argmax(votes[covered], axis=1)
    return float(np.mean(predicted == train.labels[covered]))


def rf_rfe(
    train: Dataset,
    n_trees: int = DEFAULT_TREES,
    seed: int = 0,
    mtry: Optional[int] = None,
    threads: int = 1,
) -> RfeResult:
    """
    Fit a forest on the surviving features, record its OOB accuracy, then drop
    the least important half (at least one, never the last). Lower importance
    goes first; among equal importances the larger index goes first. The best
    round has the highest OOB accuracy, ties going to the smaller subset.
    """
    if train.p < 2:
        raise InputValidationError("rf_rfe needs at least 2 features")
    features = list(range(train.p))
    trace: List[RfeRound] = []
    round_index = 0
    while True:
        subset = reduce(train, features)
        round_mtry = None if mtry is None else min(mtry, len(features))
        forest = forest_train(subset, n_trees, round_mtry, derive_seed(seed, round_index), threads)
        oob = forest_oob_accuracy(forest, subset)
        trace.append(RfeRound(features=tuple(features), oob_accuracy=oob))
        logger.debug("RFE round %d: %d features, OOB accuracy %.4f", round_index, len(features), oob)
        if len(features) == 1:
            break
        n_drop = max(1, len(features) // 2)
        order = sorted(range(len(features)), key=lambda i: (forest.importances[i], -features[i]))
        dropped = {features[i] for i in order[:n_drop]}
        features = [j for j in features if j not in dropped]
        round_index += 1

    best = max(trace, key=lambda r: (r.oob_accuracy, -r.n_features))
    logger.info("RF-RFE kept %d of %d features (OOB accuracy %.4f)", best.n_features, train.p, best.oob_accuracy)
    return RfeResult(best_subset=best.features, trace=tuple(trace))
