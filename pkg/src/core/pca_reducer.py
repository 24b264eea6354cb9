"""
PCA feature extraction with an incremental-component SVM search.

When n <= p the eigenproblem is solved in sample space: the n x n Gram matrix of
the centered data gives the scores, and loadings are recovered as
``Xc' u / sqrt(lambda)``. Otherwise the p x p covariance matrix is used. Each
component is signed so that its largest-magnitude loading is positive.
"""

import logging
from typing import Literal, Optional

import numpy as np
from scipy.linalg import null_space

from ..models.schemas import Dataset, KernelSpec, PcaBasis, PcaSearchResult
from .errors import InputValidationError
from .kernels import RBF
from .svm_core import DEFAULT_MAX_ITER, fit_multiclass, predict_multiclass

logger = logging.getLogger(__name__)

Route = Literal["auto", "gram", "covariance"]
RANK_TOL = 1e-10


def _orient(components: np.ndarray) -> np.ndarray:
    pivots = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(len(components)), pivots])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def _top_eigen(matrix: np.ndarray, q: int):
    values, vectors = np.linalg.eigh(matrix)
    order = np.argsort(values, kind="stable")[::-1][:q]
    return np.clip(values[order], 0.0, None), vectors[:, order]


def pca_fit(train: Dataset, max_components: int, route: Route = "auto") -> PcaBasis:
    X = train.features
    n, p = X.shape
    limit = min(n - 1, p)
    if not 1 <= max_components <= limit:
        raise InputValidationError(f"max_components must lie in 1..{limit}")
    if route == "auto":
        route = "gram" if n <= p else "covariance"

    center = X.mean(axis=0)
    Xc = X - center
    if route == "gram":
        eigenvalues, U = _top_eigen(Xc @ Xc.T, max_components)
        scale = eigenvalues.max() if eigenvalues.size else 0.0
        rank = int(np.sum(eigenvalues > RANK_TOL * max(scale, 1.0)))
        components = np.zeros((max_components, p))
        components[:rank] = (Xc.T @ U[:, :rank] / np.sqrt(eigenvalues[:rank])).T
        if rank < max_components:
            # zero-variance directions: any orthonormal completion will do
            completion = null_space(components[:rank]) if rank else np.eye(p)
            components[rank:] = completion[:, : max_components - rank].T
            eigenvalues[rank:] = 0.0
        explained = eigenvalues / (n - 1)
    else:
        explained, V = _top_eigen(Xc.T @ Xc / (n - 1), max_components)
        components = V.T

    basis = PcaBasis(
        components=_orient(components),
        explained_variance=explained,
        center=center,
        route=route,
    )
    logger.debug("PCA (%s route) kept %d components", route, max_components)
    return basis


def pca_transform(basis: PcaBasis, X: np.ndarray, k: Optional[int] = None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != basis.center.shape[0]:
        raise InputValidationError(f"Expected {basis.center.shape[0]} features, got {X.shape[1]}")
    k = basis.n_components if k is None else k
    return (X - basis.center) @ basis.components[:k].T


def pca_reconstruct(basis: PcaBasis, scores: np.ndarray) -> np.ndarray:
    k = scores.shape[1]
    return scores @ basis.components[:k] + basis.center


def pca_svm_search(
    train: Dataset,
    test: Dataset,
    basis: PcaBasis,
    spec: KernelSpec = RBF,
    C: float = 1.0,
    tol: float = 1e-3,
    max_iter: int = DEFAULT_MAX_ITER,
) -> PcaSearchResult:
    """Fit on PC1..PCk for k = 1..q and score on ``test``; ties go to the smaller k"""
    train_scores = pca_transform(basis, train.features)
    test_scores = pca_transform(basis, test.features)
    accuracies = []
    for k in range(1, basis.n_components + 1):
        model = fit_multiclass(train_scores[:, :k], train.labels, train.k, spec, C, tol, max_iter)
        predicted = predict_multiclass(model, test_scores[:, :k])
        accuracies.append(float(np.mean(predicted == test.labels)))
    best_k = int(np.argmax(accuracies)) + 1
    return PcaSearchResult(accuracies=tuple(accuracies), best_k=best_k)
