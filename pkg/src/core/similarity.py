import logging
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.spatial.distance import pdist, squareform

from ..models.schemas import Dataset, DistanceMatrix, FeatureTable
from .errors import InputValidationError

logger = logging.getLogger(__name__)


def distance_matrix(
    d: FeatureTable,
    subset: Optional[Sequence[int]] = None,
    label: Optional[str] = None,
) -> DistanceMatrix:
    """Pairwise Euclidean distances between samples over ``subset`` (all columns when None)"""
    X = d.features
    if subset is not None:
        idx = [int(j) for j in subset]
        if not idx:
            raise InputValidationError("Feature subset is empty")
        bad = [j for j in idx if not 0 <= j < d.p]
        if bad:
            raise InputValidationError(f"Feature indices out of range 0..{d.p - 1}: {bad}")
        X = X[:, idx]
    values = squareform(pdist(X, metric="euclidean")) if d.n > 1 else np.zeros((1, 1))
    return DistanceMatrix(
        values=values,
        sample_names=d.sample_names,
        feature_subset_label=label or ("all" if subset is None else f"{len(subset)} features"),
    )


def group_contrast(dm: DistanceMatrix, labels: Sequence[int]) -> float:
    """Mean between-class distance over mean within-class distance"""
    labels = np.asarray(labels)
    n = len(dm.sample_names)
    if labels.shape != (n,):
        raise InputValidationError(f"Expected {n} labels, got {labels.size}")
    upper = np.triu_indices(n, k=1)
    same = (labels[:, None] == labels[None, :])[upper]
    distances = dm.values[upper]
    if not same.any():
        raise InputValidationError("group contrast is undefined: every class has a single member")
    if same.all():
        raise InputValidationError("group contrast is undefined: only one class present")
    within = distances[same].mean()
    if within == 0:
        raise InputValidationError("group contrast is undefined: within-class distances are all zero")
    return float(distances[~same].mean() / within)


def class_order(labels: Sequence[int], names: Sequence[str]) -> np.ndarray:
    return np.array(sorted(range(len(names)), key=lambda i: (labels[i], names[i])), dtype=np.int64)


def export_heatmap_csv(
    matrix: np.ndarray,
    row_names: Sequence[str],
    col_names: Sequence[str],
    path: Union[str, Path],
    labels: Optional[Sequence[int]] = None,
    reorder: bool = False,
) -> Path:
    """
    Write a named matrix as CSV at 17 significant digits. With ``reorder`` the rows
    are grouped by class, then by name; a square matrix whose columns carry the row
    names gets the same column order.
    """
    matrix = np.asarray(matrix, dtype=float)
    row_names, col_names = list(row_names), list(col_names)
    if matrix.shape != (len(row_names), len(col_names)):
        raise InputValidationError(
            f"Matrix shape {matrix.shape} does not match {len(row_names)} row and {len(col_names)} column names"
        )
    if reorder:
        if labels is None or len(labels) != len(row_names):
            raise InputValidationError("Reordering needs one class label per row")
        order = class_order(labels, row_names)
        matrix = matrix[order]
        if col_names == row_names:
            matrix = matrix[:, order]
            col_names = [col_names[i] for i in order]
        row_names = [row_names[i] for i in order]

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(matrix, index=row_names, columns=col_names)
    frame.to_csv(path, float_format="%.17g", lineterminator="\n")
    logger.info("Wrote %dx%d heatmap matrix to %s", matrix.shape[0], matrix.shape[1], path)
    return path


def load_heatmap_csv(path: Union[str, Path]) -> Tuple[np.ndarray, Tuple[str, ...], Tuple[str, ...]]:
    frame = pd.read_csv(path, index_col=0, float_precision="round_trip")
    return (
        frame.to_numpy(dtype=float),
        tuple(str(name) for name in frame.index),
        tuple(str(name) for name in frame.columns),
    )


def feature_panel(d: FeatureTable, selected: Sequence[int]) -> Tuple[np.ndarray, Tuple[str, ...], Tuple[str, ...]]:
    """Sample x feature values with selected features first; labelled rows are grouped by class"""
    chosen = [int(j) for j in selected]
    if any(not 0 <= j < d.p for j in chosen) or len(set(chosen)) != len(chosen):
        raise InputValidationError("Selected features must be distinct indices in range")
    picked = set(chosen)
    columns = chosen + [j for j in range(d.p) if j not in picked]
    rows = class_order(d.labels, d.sample_names) if isinstance(d, Dataset) else np.arange(d.n)
    return (
        d.features[np.ix_(rows, columns)],
        tuple(d.sample_names[i] for i in rows),
        tuple(d.feature_names[j] for j in columns),
    )


def to_gray_levels(matrix: np.ndarray) -> np.ndarray:
    """Linear map min -> 255 (white), max -> 0 (black); a constant matrix is all white"""
    matrix = np.asarray(matrix, dtype=float)
    low, high = matrix.min(), matrix.max()
    if high == low:
        return np.full(matrix.shape, 255, dtype=np.uint8)
    return np.rint(255.0 * (high - matrix) / (high - low)).astype(np.uint8)


def export_heatmap_pgm(matrix: np.ndarray, path: Union[str, Path]) -> Path:
    """Binary 8-bit grayscale PGM (P5); darker means larger"""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.size == 0:
        raise InputValidationError("Cannot render an empty matrix")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    height, width = matrix.shape
    path.write_bytes(f"P5\n{width} {height}\n255\n".encode("ascii") + to_gray_levels(matrix).tobytes())
    return path
