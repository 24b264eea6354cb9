from fractions import Fraction
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PlainSerializer,
    PlainValidator,
    computed_field,
    model_validator,
)


def _as_fraction(value: Any) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, str)) and not isinstance(value, bool):
        return Fraction(value)
    raise ValueError(f"Expected an exact fraction such as '6/181', got {value!r}")


def _frozen_array(dtype):
    def convert(value: Any) -> np.ndarray:
        array = np.array(value, dtype=dtype)
        array.setflags(write=False)
        return array

    return convert


ExactFraction = Annotated[
    Fraction,
    PlainValidator(_as_fraction),
    PlainSerializer(lambda f: f"{f.numerator}/{f.denominator}", return_type=str),
]
FloatArray = Annotated[
    np.ndarray,
    PlainValidator(_frozen_array(np.float64)),
    PlainSerializer(lambda a: a.tolist(), return_type=list),
]
IntArray = Annotated[
    np.ndarray,
    PlainValidator(_frozen_array(np.int64)),
    PlainSerializer(lambda a: a.tolist(), return_type=list),
]

KernelFamily = Literal["linear", "polynomial", "rbf", "sigmoid"]
Orientation = Literal["samples_as_rows", "features_as_rows"]
MethodName = Literal["stepwise", "original", "pca", "correlation", "rf_rfe"]

FROZEN = ConfigDict(frozen=True, arbitrary_types_allowed=True)


# Data model

class FeatureTable(BaseModel):
    model_config = FROZEN

    features: FloatArray = Field(..., description="n x p matrix, samples as rows")
    feature_names: Tuple[str, ...]
    sample_names: Tuple[str, ...]

    @model_validator(mode="after")
    def _check_table(self):
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        n, p = self.features.shape
        if p < 1:
            raise ValueError("at least one feature is required")
        if len(self.feature_names) != p or len(self.sample_names) != n:
            raise ValueError("name lists do not match the matrix shape")
        if len(set(self.feature_names)) != p:
            raise ValueError("feature names must be unique")
        if len(set(self.sample_names)) != n:
            raise ValueError("sample names must be unique")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain NaN or infinite values")
        return self

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]


class Dataset(FeatureTable):
    labels: IntArray = Field(..., description="Class ids in 0..k-1")
    class_names: Tuple[str, ...] = Field(..., description="Original label text per class id")

    @model_validator(mode="after")
    def _check_labels(self):
        if self.n < 2:
            raise ValueError("a dataset needs at least 2 samples")
        if self.labels.shape != (self.n,):
            raise ValueError("labels must have one entry per sample")
        k = len(self.class_names)
        if k < 2:
            raise ValueError("a dataset needs at least 2 classes")
        if self.labels.min() < 0 or self.labels.max() >= k:
            raise ValueError(f"labels must lie in 0..{k - 1}")
        if np.any(np.bincount(self.labels, minlength=k) == 0):
            raise ValueError("every class id must occur at least once")
        return self

    @property
    def k(self) -> int:
        return len(self.class_names)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)


class FeatureStats(BaseModel):
    model_config = FROZEN

    mean: FloatArray
    sd: FloatArray
    constant: Tuple[bool, ...]


class SplitIndices(BaseModel):
    model_config = FROZEN

    train: IntArray
    test: IntArray
    seed: int = Field(..., ge=0, lt=2**64)

    @model_validator(mode="after")
    def _check_disjoint(self):
        if np.intersect1d(self.train, self.test).size:
            raise ValueError("train and test indices overlap")
        return self


# Kernels and SVM

class KernelSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: KernelFamily = "rbf"
    gamma: Optional[float] = Field(None, description="None means derive from training data")
    degree: int = 3
    coef: float = 0.0

    @model_validator(mode="after")
    def _check_params(self):
        if self.gamma is not None and self.family != "linear" and not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if self.family == "polynomial" and self.degree < 1:
            raise ValueError("polynomial degree must be >= 1")
        return self


class BinarySvm(BaseModel):
    model_config = FROZEN

    alpha: FloatArray = Field(..., description="Dual coefficient per training point")
    bias: float
    support_indices: IntArray
    support_vectors: FloatArray
    sv_labels: FloatArray
    spec: KernelSpec
    C: float = Field(..., gt=0)
    iterations: int = 0

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]


class SvmModel(BaseModel):
    model_config = FROZEN

    binary_models: Tuple[BinarySvm, ...]
    class_pairs: Tuple[Tuple[int, int], ...] = Field(
        ..., description="(positive class, negative class) per binary model"
    )
    class_count: int
    n_features: int

    @model_validator(mode="after")
    def _check_pairs(self):
        k = self.class_count
        if len(self.binary_models) != k * (k - 1) // 2 or len(self.class_pairs) != len(self.binary_models):
            raise ValueError("a one-against-one model needs exactly k(k-1)/2 binary models")
        return self


class SvmModelFile(BaseModel):
    format_version: Literal[1] = 1
    model: SvmModel


# Stepwise selection

class FeatureScore(BaseModel):
    model_config = ConfigDict(frozen=True)

    feature_index: int = Field(..., ge=0)
    errors: int = Field(..., ge=0)
    n_train: int = Field(..., ge=1)

    @model_validator(mode="after")
    def _check_errors(self):
        if self.errors > self.n_train:
            raise ValueError("errors cannot exceed the training size")
        return self

    @computed_field
    @property
    def apr(self) -> str:
        return f"{self.errors}/{self.n_train}"

    @computed_field
    @property
    def apr_real(self) -> float:
        return self.errors / self.n_train

    @property
    def apr_fraction(self) -> Fraction:
        return Fraction(self.errors, self.n_train)


class CandidateEvaluation(BaseModel):
    model_config = ConfigDict(frozen=True)

    threshold: ExactFraction
    subset_size: int
    correct: int
    evaluated: int

    @computed_field
    @property
    def validation_accuracy(self) -> float:
        return self.correct / self.evaluated


class SelectionResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    scores: Tuple[FeatureScore, ...] = Field(..., description="Ascending by APR, ties by index")
    chosen_threshold: ExactFraction
    selected: Tuple[int, ...]
    selected_names: Tuple[str, ...] = ()
    validation_accuracy: float
    candidate_trace: Tuple[CandidateEvaluation, ...]
    mode: Literal["cv", "fixed"] = "cv"
    folds: int = 5
    seed: int = 0

    @model_validator(mode="after")
    def _check_selection(self):
        expected = sorted(s.feature_index for s in self.scores if s.apr_fraction <= self.chosen_threshold)
        if list(self.selected) != expected:
            raise ValueError("selected must equal {i : apr_i <= chosen_threshold}")
        if not 1 <= len(self.selected) <= len(self.scores):
            raise ValueError("selection must keep between 1 and p features")
        return self


# Baselines

class CorrelationRemoval(BaseModel):
    model_config = ConfigDict(frozen=True)

    pair: Tuple[int, int]
    removed_index: int
    abs_r: float


class CorrelationFilterResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    threshold: float = Field(..., gt=0, lt=1)
    removed: Tuple[int, ...]
    kept: Tuple[int, ...]
    removal_log: Tuple[CorrelationRemoval, ...]


class SweepEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    threshold: float
    n_kept: int
    accuracy: float


class ThresholdSweep(BaseModel):
    model_config = ConfigDict(frozen=True)

    entries: Tuple[SweepEntry, ...]
    best_threshold: float
    best_accuracy: float
    best_kept: Tuple[int, ...]


class PcaBasis(BaseModel):
    model_config = FROZEN

    components: FloatArray = Field(..., description="q x p orthonormal rows")
    explained_variance: FloatArray
    center: FloatArray
    route: Literal["gram", "covariance"]

    @property
    def n_components(self) -> int:
        return self.components.shape[0]


class PcaSearchResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    accuracies: Tuple[float, ...] = Field(..., description="Entry k-1 holds the accuracy on PC1..PCk")
    best_k: int


class ForestModel(BaseModel):
    model_config = FROZEN

    trees: Tuple[Any, ...] = Field(..., description="Fitted CART trees")
    bootstrap_indices: Tuple[IntArray, ...]
    n_trees: int
    mtry: int
    importances: FloatArray
    class_count: int
    n_features: int
    seed: int


class RfeRound(BaseModel):
    model_config = ConfigDict(frozen=True)

    features: Tuple[int, ...]
    oob_accuracy: float

    @computed_field
    @property
    def n_features(self) -> int:
        return len(self.features)


class RfeResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    best_subset: Tuple[int, ...]
    trace: Tuple[RfeRound, ...]


# Evaluation

METHOD_FIELDS: Dict[str, set] = {
    "stepwise": {"select_kernel", "predict_kernel", "C", "folds", "threshold"},
    "original": {"predict_kernel", "C"},
    "pca": {"predict_kernel", "C", "max_components"},
    "correlation": {"predict_kernel", "C", "correlation_thresholds"},
    "rf_rfe": {"predict_kernel", "C", "n_trees", "mtry"},
}
TUNABLE_FIELDS = set().union(*METHOD_FIELDS.values())


class MethodConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    method: MethodName
    label: Optional[str] = None
    select_kernel: Optional[KernelSpec] = None
    predict_kernel: Optional[KernelSpec] = None
    C: Optional[float] = Field(None, gt=0)
    folds: Optional[int] = Field(None, ge=2)
    threshold: Optional[ExactFraction] = None
    correlation_thresholds: Optional[Tuple[float, ...]] = None
    max_components: Optional[int] = Field(None, ge=1)
    n_trees: Optional[int] = Field(None, ge=1)
    mtry: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _check_applicable(self):
        allowed = METHOD_FIELDS[self.method]
        stray = sorted(
            name for name in TUNABLE_FIELDS - allowed if getattr(self, name) is not None
        )
        if stray:
            raise ValueError(f"fields {stray} do not apply to method '{self.method}'")
        if self.correlation_thresholds is not None:
            if not self.correlation_thresholds:
                raise ValueError("correlation_thresholds must be nonempty")
            if any(not 0 < t < 1 for t in self.correlation_thresholds):
                raise ValueError("correlation thresholds must lie in (0, 1)")
        return self

    @property
    def name(self) -> str:
        return self.label or self.method


class MethodFailure(BaseModel):
    model_config = ConfigDict(frozen=True)

    repetition: int
    method: str
    error_type: str
    message: str


class MethodSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: str
    method: MethodName
    accuracies: Tuple[Optional[float], ...]
    selected_counts: Tuple[Optional[int], ...]
    mean: Optional[float]
    sd: Optional[float]
    rank: int
    n_missing: int


class EvaluationReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    dataset_label: str
    per_method: Dict[str, MethodSummary]
    repetitions: int
    master_seed: int
    split_digests: Tuple[str, ...]
    failures: Tuple[MethodFailure, ...] = ()

    @model_validator(mode="after")
    def _check_ranks(self):
        ranks = sorted(summary.rank for summary in self.per_method.values())
        if ranks != list(range(1, len(self.per_method) + 1)):
            raise ValueError("ranks must be a permutation of 1..#methods")
        return self


class DataSource(BaseModel):
    model_config = ConfigDict(frozen=True)

    path: str
    orientation: Orientation = "samples_as_rows"
    label_column: Optional[str] = None
    id_column: Optional[str] = None
    header: bool = True


class RunManifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    command: Literal["compare"] = "compare"
    version: str
    data: DataSource
    dataset_label: str
    dataset_digest: str
    methods: Tuple[MethodConfig, ...]
    repetitions: int
    master_seed: int
    standardize: bool
    svm_tol: float = Field(1e-3, gt=0)
    svm_max_iter: int = Field(10_000_000, ge=1)
    split_digests: Tuple[str, ...]


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    command: Literal["select", "reduce", "compare", "distances", "synth"]
    data: Optional[DataSource] = None
    methods: Tuple[MethodConfig, ...] = ()
    master_seed: int = Field(0, ge=0, lt=2**64)
    repetitions: int = Field(100, ge=1)
    output_dir: str = "results"
    threads: int = Field(1, ge=1)
    standardize: bool = True


# Similarity

class DistanceMatrix(BaseModel):
    model_config = FROZEN

    values: FloatArray
    sample_names: Tuple[str, ...]
    feature_subset_label: str = "all"

    @model_validator(mode="after")
    def _check_metric(self):
        D = self.values
        n = len(self.sample_names)
        if D.shape != (n, n):
            raise ValueError("distance matrix must be n x n")
        if np.any(D < 0):
            raise ValueError("distances must be nonnegative")
        if not np.allclose(D, D.T, rtol=0.0, atol=1e-12):
            raise ValueError("distance matrix must be symmetric")
        if np.any(np.diag(D) != 0):
            raise ValueError("distance matrix must have a zero diagonal")
        if n >= 3:
            rng = np.random.default_rng(0)
            i, j, m = rng.integers(0, n, size=(3, min(256, n ** 3)))
            if np.any(D[i, m] > D[i, j] + D[j, m] + 1e-9):
                raise ValueError("distance matrix violates the triangle inequality")
        return self
