"""
Dataset ingestion, splitting, standardization and synthetic data.

Randomness: every stochastic routine builds ``numpy.random.Generator(PCG64(...))``
from an explicit unsigned seed. Derived seeds go through ``numpy.random.SeedSequence``:

    derive_seed(seed, *keys) = first 64-bit word of SeedSequence([seed, *keys])

Repetition r of a benchmark uses ``derive_seed(master_seed, r)``; CV folds use
``derive_seed(seed, FOLD_STREAM)``. PCG64 and SeedSequence are platform independent,
so results do not depend on thread count or operating system.
"""

import hashlib
import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError
from sklearn.model_selection import StratifiedKFold

from ..models.schemas import Dataset, FeatureStats, FeatureTable, Orientation, SplitIndices
from .errors import CsvParseError, InputValidationError

logger = logging.getLogger(__name__)

TableT = TypeVar("TableT", bound=FeatureTable)

ColumnRef = Union[str, int, None]
FOLD_STREAM = 0xC5


def derive_seed(seed: int, *keys: int) -> int:
    words = np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(2, dtype=np.uint32)
    return (int(words[0]) << 32) | int(words[1])


def make_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def make_dataset(**fields) -> Dataset:
    try:
        return Dataset(**fields)
    except ValidationError as e:
        raise InputValidationError(_first_error(e)) from e


def make_table(**fields) -> FeatureTable:
    try:
        return FeatureTable(**fields)
    except ValidationError as e:
        raise InputValidationError(_first_error(e)) from e


def _first_error(error: ValidationError) -> str:
    return error.errors()[0]["msg"].removeprefix("Value error, ")


def take_samples(d: Dataset, indices: Sequence[int]) -> Dataset:
    """Row subset keeping class ids and class names"""
    idx = np.asarray(indices, dtype=np.int64)
    return make_dataset(
        features=d.features[idx],
        labels=d.labels[idx],
        feature_names=d.feature_names,
        sample_names=tuple(d.sample_names[i] for i in idx),
        class_names=d.class_names,
    )


def dataset_digest(d: FeatureTable) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(d.features, dtype="<f8").tobytes())
    if isinstance(d, Dataset):
        digest.update(np.ascontiguousarray(d.labels, dtype="<i8").tobytes())
        digest.update("\x1f".join(d.class_names).encode())
    digest.update("\x1f".join(d.feature_names).encode())
    digest.update("\x1f".join(d.sample_names).encode())
    return digest.hexdigest()


def split_digest(split: SplitIndices) -> str:
    digest = hashlib.sha256(np.ascontiguousarray(split.train, dtype="<i8").tobytes())
    digest.update(b"|")
    digest.update(np.ascontiguousarray(split.test, dtype="<i8").tobytes())
    return digest.hexdigest()[:16]


# CSV ingestion

def _read_grid(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray]:
    """Read a comma-delimited file as strings; returns (cells, 1-based line numbers)"""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"File not found: {path}")
    try:
        frame = pd.read_csv(
            path,
            header=None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            skipinitialspace=True,
        )
    except pd.errors.EmptyDataError as e:
        raise CsvParseError("file is empty") from e
    except pd.errors.ParserError as e:
        line = _line_from_parser_error(str(e))
        raise CsvParseError(f"malformed row length ({e})", line=line) from e

    frame.index = np.arange(1, len(frame) + 1)
    blank = frame.isna().all(axis=1)
    frame = frame[~blank]
    short = frame.isna().any(axis=1)
    if short.any():
        line = int(short.idxmax())
        found = int(frame.loc[line].notna().sum())
        raise CsvParseError(f"malformed row length: expected {frame.shape[1]} fields, found {found}", line=line)
    return frame.to_numpy(dtype=object), frame.index.to_numpy()


def _line_from_parser_error(message: str) -> Optional[int]:
    marker = "line "
    at = message.find(marker)
    if at < 0:
        return None
    digits = ""
    for ch in message[at + len(marker):]:
        if not ch.isdigit():
            break
        digits += ch
    return int(digits) if digits else None


def _resolve_column(ref: ColumnRef, names: Sequence[str], default: Optional[int], what: str) -> Optional[int]:
    if ref is None:
        return default
    if isinstance(ref, int) or (isinstance(ref, str) and ref.isdigit() and ref not in names):
        position = int(ref)
        if not 0 <= position < len(names):
            raise InputValidationError(f"{what} position {position} is out of range")
        return position
    if ref not in names:
        raise InputValidationError(f"{what} '{ref}' not found")
    return list(names).index(ref)


def _parse_numeric(cells: np.ndarray, locate) -> np.ndarray:
    """Convert a string block to float64, reporting the first bad cell by file position"""
    try:
        values = cells.astype(np.float64)
    except ValueError:
        values = None
    if values is None:
        for (i, j), cell in np.ndenumerate(cells):
            try:
                float(cell)
            except ValueError:
                line, column = locate(i, j)
                raise CsvParseError(f"non-numeric feature value {cell!r}", line=line, column=column) from None
    bad = ~np.isfinite(values)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        line, column = locate(i, j)
        raise CsvParseError(f"non-finite feature value {cells[i, j]!r}", line=line, column=column)
    return values


def _read_oriented(
    path: Union[str, Path],
    orientation: Orientation,
    header: bool,
):
    """Return (body cells samples x fields, field names, locate(i, j) -> (line, column))"""
    grid, lines = _read_grid(path)
    if orientation == "samples_as_rows":
        if header:
            names, body, body_lines = [str(c).strip() for c in grid[0]], grid[1:], lines[1:]
        else:
            names, body, body_lines = [str(j) for j in range(grid.shape[1])], grid, lines
        return body, names, lambda i, j: (int(body_lines[i]), int(j) + 1)
    if orientation == "features_as_rows":
        names = [str(c).strip() for c in grid[:, 0]]
        body = grid[:, 1:].T
        return body, names, lambda i, j: (int(lines[j]), int(i) + 2)
    raise InputValidationError(f"unknown orientation '{orientation}'")


def load_csv(
    path: Union[str, Path],
    orientation: Orientation = "samples_as_rows",
    label_column: ColumnRef = None,
    id_column: ColumnRef = None,
    header: bool = True,
) -> Dataset:
    """
    Load a labelled dataset.

    samples_as_rows: one sample per line; the label column defaults to the first field.
    features_as_rows: one feature per line, the first field of each line names the row;
    the label row defaults to the first line. ``id_column`` names the field (or row)
    that carries sample names. Labels are mapped to ids in first-appearance order.
    """
    body, names, locate = _read_oriented(path, orientation, header)
    label_at = _resolve_column(label_column, names, 0, "label column")
    id_at = _resolve_column(id_column, names, None, "id column")
    if id_at is not None and id_at == label_at:
        raise InputValidationError("label and id columns must differ")
    if body.shape[0] < 2:
        raise InputValidationError("a dataset needs at least 2 samples")

    feature_cols = [j for j in range(len(names)) if j not in (label_at, id_at)]
    if not feature_cols:
        raise InputValidationError("no feature columns found")
    features = _parse_numeric(body[:, feature_cols], lambda i, j: locate(i, feature_cols[j]))

    raw_labels = [str(v).strip() for v in body[:, label_at]]
    codes, uniques = pd.factorize(pd.Series(raw_labels), sort=False)
    if len(uniques) < 2:
        raise InputValidationError(f"single-class file: every sample is labelled '{uniques[0]}'")

    if id_at is None:
        sample_names = tuple(f"s{i}" for i in range(body.shape[0]))
    else:
        sample_names = tuple(str(v).strip() for v in body[:, id_at])

    d = make_dataset(
        features=features,
        labels=codes,
        feature_names=tuple(names[j] for j in feature_cols),
        sample_names=sample_names,
        class_names=tuple(str(u) for u in uniques),
    )
    logger.info(
        "Loaded %s: n=%d p=%d k=%d label mapping %s",
        path, d.n, d.p, d.k, dict(enumerate(d.class_names)),
    )
    return d


def load_feature_table(
    path: Union[str, Path],
    orientation: Orientation = "samples_as_rows",
    id_column: ColumnRef = None,
    header: bool = True,
    drop_columns: Sequence[str] = (),
) -> FeatureTable:
    """Load an unlabelled matrix (every field except the id field is a feature)"""
    body, names, locate = _read_oriented(path, orientation, header)
    id_at = _resolve_column(id_column, names, None, "id column")
    dropped = {names.index(c) for c in drop_columns if c in names}
    feature_cols = [j for j in range(len(names)) if j != id_at and j not in dropped]
    if not feature_cols:
        raise InputValidationError("no feature columns found")
    features = _parse_numeric(body[:, feature_cols], lambda i, j: locate(i, feature_cols[j]))
    if id_at is None:
        sample_names = tuple(f"s{i}" for i in range(body.shape[0]))
    else:
        sample_names = tuple(str(v).strip() for v in body[:, id_at])
    return make_table(
        features=features,
        feature_names=tuple(names[j] for j in feature_cols),
        sample_names=sample_names,
    )


def save_csv(d: Dataset, path: Union[str, Path], orientation: Orientation = "samples_as_rows") -> Path:
    """
    Write a dataset so that ``load_csv(path, orientation, label_column="label",
    id_column="sample")`` returns it unchanged (values at 17 significant digits).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(d.features, columns=list(d.feature_names))
    frame.insert(0, "label", [d.class_names[c] for c in d.labels])
    frame.insert(0, "sample", list(d.sample_names))
    if orientation == "features_as_rows":
        frame = frame.T
        frame.to_csv(path, header=False, float_format="%.17g", lineterminator="\n")
    else:
        frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path


# Splitting and preprocessing

def stratified_half_split(d: Dataset, seed: int) -> SplitIndices:
    """Per class, ceil(count/2) samples go to train and the rest to test"""
    counts = d.class_counts()
    if np.any(counts < 2):
        small = [d.class_names[c] for c in np.flatnonzero(counts < 2)]
        raise InputValidationError(f"classes {small} have fewer than 2 members")
    rng = make_generator(seed)
    train: List[np.ndarray] = []
    test: List[np.ndarray] = []
    for c in range(d.k):
        members = rng.permutation(np.flatnonzero(d.labels == c))
        cut = math.ceil(len(members) / 2)
        train.append(members[:cut])
        test.append(members[cut:])
    return SplitIndices(
        train=np.sort(np.concatenate(train)),
        test=np.sort(np.concatenate(test)),
        seed=seed,
    )


def stratified_folds(labels: np.ndarray, folds: int, seed: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    labels = np.asarray(labels)
    if folds < 2:
        raise InputValidationError("folds must be >= 2")
    counts = np.bincount(labels)
    if np.any(counts[counts > 0] < folds):
        raise InputValidationError(f"every class needs at least {folds} members for {folds}-fold CV")
    state = np.random.RandomState(derive_seed(seed, FOLD_STREAM) % 2**32)
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=state)
    return [(tr, te) for tr, te in splitter.split(np.zeros(len(labels)), labels)]


def standardize(d: TableT, stats: Optional[FeatureStats] = None) -> Tuple[TableT, FeatureStats]:
    """
    Center and scale each feature with sample sd (n-1). When ``stats`` is given
    (test-set case) those statistics are applied instead; constant training
    columns always map to zero.
    """
    X = d.features
    if stats is None:
        constant = np.ptp(X, axis=0) == 0
        mean = X.mean(axis=0)
        sd = X.std(axis=0, ddof=1)
        stats = FeatureStats(mean=mean, sd=sd, constant=tuple(bool(c) for c in constant))
    elif stats.mean.shape != (d.p,):
        raise InputValidationError("standardization statistics do not match the feature count")

    constant = np.asarray(stats.constant)
    scale = np.where(constant, 1.0, stats.sd)
    Z = (X - stats.mean) / scale
    Z[:, constant] = 0.0
    return d.model_copy(update={"features": _frozen(Z)}), stats


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=np.float64)
    values.setflags(write=False)
    return values


# Synthetic data

def synth_planted(
    n: int,
    p: int,
    n_informative: int,
    k: int = 2,
    effect: float = 2.0,
    seed: int = 0,
) -> Tuple[Dataset, Tuple[int, ...]]:
    """
    Large-p-small-n data with planted signal: noise features are i.i.d. N(0, 1);
    on informative features class c has mean ``effect * (c - (k - 1) / 2)``, so
    neighbouring classes differ by ``effect``. Classes are balanced (round-robin,
    then shuffled).
    """
    if k < 2:
        raise InputValidationError("k must be >= 2")
    if n < k or p < 1:
        raise InputValidationError("need n >= k and p >= 1")
    if not 0 <= n_informative <= p:
        raise InputValidationError("n_informative must lie in 0..p")

    rng = make_generator(seed)
    labels = rng.permutation(np.arange(n) % k)
    informative = np.sort(rng.choice(p, size=n_informative, replace=False))
    X = rng.standard_normal((n, p))
    shift = effect * (labels - (k - 1) / 2.0)
    X[:, informative] += shift[:, None]

    width = len(str(p - 1))
    d = make_dataset(
        features=X,
        labels=labels,
        feature_names=tuple(f"g{j:0{width}d}" for j in range(p)),
        sample_names=tuple(f"s{i}" for i in range(n)),
        class_names=tuple(f"c{c}" for c in range(k)),
    )
    return d, tuple(int(j) for j in informative)
