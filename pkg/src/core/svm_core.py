"""
Soft-margin kernel SVM trained on the dual, one-against-one multiclass voting
and apparent error rates.

The solver minimises ``1/2 a'Qa - e'a`` with ``Q_ij = y_i y_j K_ij`` subject to
``y'a = 0`` and ``0 <= a_i <= C`` by pairwise working-set updates (SMO with
second-order working-set selection). It stops once the maximal KKT violation
``max_{I_up} -y_i G_i - min_{I_low} -y_j G_j`` drops below ``tol``. Indefinite
kernels (sigmoid) run the same updates with a curvature floor and only get a
feasible stationary point.

Tie rules: a decision value of exactly 0 predicts +1; multiclass vote ties go to
the smallest class id.
"""

import json
import logging
from fractions import Fraction
from pathlib import Path
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np

from ..models.schemas import BinarySvm, Dataset, KernelSpec, SvmModel, SvmModelFile
from .errors import InputValidationError, SolverError
from .kernels import kernel_matrix, resolve_gamma

logger = logging.getLogger(__name__)

TAU = 1e-12
FEASIBILITY_TOL = 1e-8
DEFAULT_MAX_ITER = 10_000_000


class ApparentErrorRate(NamedTuple):
    errors: int
    n: int

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.errors, self.n)

    @property
    def value(self) -> float:
        return self.errors / self.n


def dual_objective(alpha: np.ndarray, y: np.ndarray, K: np.ndarray) -> float:
    """The maximised dual: sum(a) - 1/2 sum_ij a_i a_j y_i y_j K_ij"""
    ay = np.asarray(alpha) * np.asarray(y)
    return float(np.sum(alpha) - 0.5 * ay @ K @ ay)


def _smo(K: np.ndarray, y: np.ndarray, C: float, tol: float, max_iter: int) -> Tuple[np.ndarray, int, float]:
    n = len(y)
    Q = np.outer(y, y) * K
    Qd = np.diag(Q).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)
    positive = y > 0

    violation = np.inf
    for it in range(max_iter):
        at_upper = alpha >= C
        at_lower = alpha <= 0
        up = np.where(positive, ~at_upper, ~at_lower)
        low = np.where(positive, ~at_lower, ~at_upper)
        score = -y * G

        up_scores = np.where(up, score, -np.inf)
        i = int(np.argmax(up_scores))
        m = up_scores[i]
        low_scores = np.where(low, score, np.inf)
        violation = m - low_scores.min()
        if violation < tol:
            return alpha, it, float(violation)

        # second-order choice of j among violating partners
        b = m - low_scores
        a = Qd[i] + Qd - 2.0 * y[i] * y * Q[i]
        a = np.where(a > 0, a, TAU)
        gain = np.where(low & (b > 0), -(b * b) / a, np.inf)
        j = int(np.argmin(gain))

        old_i, old_j = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = Qd[i] + Qd[j] + 2.0 * Q[i, j]
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            elif alpha[j] > C:
                alpha[j] = C
                alpha[i] = C + diff
        else:
            quad = Qd[i] + Qd[j] - 2.0 * Q[i, j]
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
                elif alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
                elif alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total

        G += Q[i] * (alpha[i] - old_i) + Q[j] * (alpha[j] - old_j)

    raise SolverError(
        f"SMO did not converge within {max_iter} pair updates",
        best_alpha=alpha.copy(),
        iterations=max_iter,
        max_violation=float(violation),
    )


def _bias(alpha: np.ndarray, y: np.ndarray, K: np.ndarray, C: float) -> float:
    """Mean of y_i - f0(x_i) over free SVs, else the midpoint of the bound interval"""
    v = y - K @ (alpha * y)
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(v[free].mean())
    logger.debug("No free support vectors; bias taken from the bound interval")
    positive = y > 0
    up = np.where(positive, alpha < C, alpha > 0)
    low = np.where(positive, alpha > 0, alpha < C)
    lower = v[up].max() if up.any() else -np.inf
    upper = v[low].min() if low.any() else np.inf
    if np.isinf(lower):
        return float(upper)
    if np.isinf(upper):
        return float(lower)
    return float((lower + upper) / 2.0)


def _as_binary_labels(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise InputValidationError("Binary labels must be +1 or -1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise InputValidationError("Binary training needs both labels present")
    return y


def train_binary(
    X: np.ndarray,
    y: np.ndarray,
    spec: KernelSpec,
    C: float = 1.0,
    tol: float = 1e-3,
    max_iter: int = DEFAULT_MAX_ITER,
) -> BinarySvm:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = _as_binary_labels(y)
    if X.shape[0] != y.shape[0]:
        raise InputValidationError(f"X has {X.shape[0]} rows but y has {y.shape[0]} labels")
    if not C > 0:
        raise InputValidationError("C must be > 0")
    if not tol > 0:
        raise InputValidationError("tol must be > 0")

    spec = resolve_gamma(spec, X)
    K = kernel_matrix(spec, X)
    alpha, iterations, violation = _smo(K, y, C, tol, max_iter)
    alpha = np.clip(alpha, 0.0, C)

    if abs(np.dot(alpha, y)) >= FEASIBILITY_TOL or alpha.min() < 0 or alpha.max() > C:
        raise SolverError(
            "Dual feasibility lost during optimisation",
            best_alpha=alpha, iterations=iterations, max_violation=violation,
        )
    bias = _bias(alpha, y, K, C)
    support = np.flatnonzero(alpha > 0)
    logger.debug("SMO converged in %d updates, %d support vectors", iterations, support.size)
    return BinarySvm(
        alpha=alpha,
        bias=bias,
        support_indices=support,
        support_vectors=X[support],
        sv_labels=y[support],
        spec=spec,
        C=C,
        iterations=iterations,
    )


def decision_function(model: BinarySvm, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise InputValidationError(f"Expected {model.n_features} features, got {X.shape[1]}")
    coef = model.alpha[model.support_indices] * model.sv_labels
    return kernel_matrix(model.spec, X, model.support_vectors) @ coef + model.bias


def predict_binary(model: BinarySvm, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    values = decision_function(model, X)
    return np.where(values >= 0, 1, -1), values


def kkt_violations(model: BinarySvm, X: np.ndarray, y: np.ndarray, tol: float = 1e-3) -> np.ndarray:
    """Indices of training points breaking any of the three KKT conditions"""
    y = np.asarray(y, dtype=float)
    margin = y * decision_function(model, X)
    alpha = model.alpha
    at_zero = alpha <= 0
    at_c = alpha >= model.C
    free = ~at_zero & ~at_c
    bad = (at_zero & (margin < 1 - tol)) | (free & (np.abs(margin - 1) > tol)) | (at_c & (margin > 1 + tol))
    return np.flatnonzero(bad)


# Multiclass

def fit_multiclass(
    X: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    spec: KernelSpec,
    C: float = 1.0,
    tol: float = 1e-3,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SvmModel:
    """One binary model per class pair (a, b), a < b, with a as the +1 side"""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = np.asarray(labels)
    if class_count < 2:
        raise InputValidationError("Multiclass training needs k >= 2")
    counts = np.bincount(labels, minlength=class_count)
    if len(counts) > class_count or np.any(counts == 0):
        raise InputValidationError("Every class must be present in the training data")

    spec = resolve_gamma(spec, X)
    models, pairs = [], []
    for a in range(class_count):
        for b in range(a + 1, class_count):
            mask = (labels == a) | (labels == b)
            y = np.where(labels[mask] == a, 1.0, -1.0)
            models.append(train_binary(X[mask], y, spec, C, tol, max_iter))
            pairs.append((a, b))
    return SvmModel(
        binary_models=tuple(models),
        class_pairs=tuple(pairs),
        class_count=class_count,
        n_features=X.shape[1],
    )


def train_multiclass(
    d: Dataset,
    spec: KernelSpec,
    C: float = 1.0,
    tol: float = 1e-3,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SvmModel:
    return fit_multiclass(d.features, d.labels, d.k, spec, C, tol, max_iter)


def vote_counts(model: SvmModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise InputValidationError(f"Expected {model.n_features} features, got {X.shape[1]}")
    votes = np.zeros((X.shape[0], model.class_count), dtype=np.int64)
    rows = np.arange(X.shape[0])
    for binary, (a, b) in zip(model.binary_models, model.class_pairs):
        signs, _ = predict_binary(binary, X)
        votes[rows, np.where(signs > 0, a, b)] += 1
    return votes


def predict_multiclass(model: SvmModel, X: np.ndarray) -> np.ndarray:
    # argmax returns the first maximum, i.e. the smallest class id on ties
    return np.argmax(vote_counts(model, X), axis=1)


def apparent_error_rate(model: SvmModel, d: Dataset) -> ApparentErrorRate:
    errors = int(np.sum(predict_multiclass(model, d.features) != d.labels))
    return ApparentErrorRate(errors=errors, n=d.n)


# Serialization

def save_model(model: SvmModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(SvmModelFile(model=model).model_dump_json(indent=2) + "\n")
    return path


def load_model(path: Union[str, Path]) -> SvmModel:
    text = Path(path).read_text()
    version: Optional[int] = json.loads(text).get("format_version")
    if version != 1:
        raise InputValidationError(f"Unsupported model format version: {version}")
    return SvmModelFile.model_validate_json(text).model
