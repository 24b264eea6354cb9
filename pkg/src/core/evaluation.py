"""
Repeated stratified half-split benchmark.

Repetition r draws its split from ``derive_seed(master_seed, r)`` and every
method sees that same split. Methods select on the training half only and are
scored on the test half. A method failing in one repetition records a missing
value instead of aborting the run.
"""

import logging
import threading
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from .. import __version__
from ..models.schemas import (
    DataSource,
    Dataset,
    EvaluationReport,
    KernelSpec,
    MethodConfig,
    MethodFailure,
    MethodSummary,
    RunManifest,
)
from .correlation_filter import DEFAULT_THRESHOLDS, sweep_correlation_thresholds
from .data_model import dataset_digest, derive_seed, split_digest, standardize, stratified_half_split, take_samples
from .errors import InputValidationError, StepSvmError
from .kernels import LINEAR, RBF
from .parallel import parallel_map
from .pca_reducer import pca_fit, pca_svm_search
from .random_forest import DEFAULT_TREES, rf_rfe
from .stepwise import StepwiseSelector, reduce
from .svm_core import DEFAULT_MAX_ITER, predict_multiclass, train_multiclass

logger = logging.getLogger(__name__)

METHOD_ORDER = ("stepwise", "original", "pca", "correlation", "rf_rfe")
KERNEL_FAMILIES = ("linear", "polynomial", "rbf", "sigmoid")
FOREST_STREAM = 0xF0
RECOVERABLE_ERRORS = (StepSvmError, np.linalg.LinAlgError, ValueError)
TIE_FOOTNOTE = "Ranks by descending mean accuracy; ties broken by method declaration order."


class DatasetPreset(NamedTuple):
    predict_kernel: KernelSpec
    threshold: Fraction


# Per-dataset prediction kernels and fixed APR thresholds; selection always uses RBF
DATASET_PRESETS: Dict[str, DatasetPreset] = {
    "hedenfalk": DatasetPreset(LINEAR, Fraction(3, 11)),
    "gordon": DatasetPreset(RBF, Fraction(4, 91)),
    "alon": DatasetPreset(RBF, Fraction(6, 31)),
    "khan": DatasetPreset(LINEAR, Fraction(12, 32)),
    "shipp": DatasetPreset(LINEAR, Fraction(10, 39)),
}


class MethodOutcome(NamedTuple):
    accuracy: float
    n_selected: int


def accuracy(predicted: Sequence[int], truth: Sequence[int]) -> float:
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape or predicted.ndim != 1:
        raise InputValidationError(f"Length mismatch: {predicted.size} predictions for {truth.size} labels")
    if truth.size < 1:
        raise InputValidationError("accuracy needs at least one prediction")
    return float(np.mean(predicted == truth))


# Method configuration

def default_methods(
    select_kernel: KernelSpec = RBF,
    predict_kernel: KernelSpec = RBF,
    C: float = 1.0,
    folds: int = 5,
    correlation_thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    n_trees: int = DEFAULT_TREES,
) -> List[MethodConfig]:
    """All five methods in table order with every applicable field filled in"""
    return [
        MethodConfig(method="stepwise", select_kernel=select_kernel, predict_kernel=predict_kernel, C=C, folds=folds),
        MethodConfig(method="original", predict_kernel=predict_kernel, C=C),
        MethodConfig(method="pca", predict_kernel=predict_kernel, C=C),
        MethodConfig(
            method="correlation",
            predict_kernel=predict_kernel,
            C=C,
            correlation_thresholds=tuple(correlation_thresholds),
        ),
        MethodConfig(method="rf_rfe", predict_kernel=predict_kernel, C=C, n_trees=n_trees),
    ]


def apply_preset(
    methods: Sequence[MethodConfig],
    preset: str,
    use_threshold: bool = False,
    predict_kernel: Optional[KernelSpec] = None,
    select_kernel: Optional[KernelSpec] = None,
) -> List[MethodConfig]:
    """Preset kernels (and optionally threshold); kernels passed explicitly are kept"""
    if preset not in DATASET_PRESETS:
        raise InputValidationError(f"Unknown preset '{preset}'; choose from {sorted(DATASET_PRESETS)}")
    chosen = DATASET_PRESETS[preset]
    updated = []
    for config in methods:
        fields = config.model_dump(exclude_none=True)
        fields["predict_kernel"] = predict_kernel or chosen.predict_kernel
        if config.method == "stepwise":
            fields["select_kernel"] = select_kernel or RBF
            if use_threshold:
                fields["threshold"] = chosen.threshold
        updated.append(MethodConfig.model_validate(fields))
    return updated


def kernel_sweep(config: MethodConfig) -> List[MethodConfig]:
    """One copy of ``config`` per kernel family for the prediction kernel, labelled by family"""
    base = config.predict_kernel or RBF
    sweep = []
    for family in KERNEL_FAMILIES:
        fields = config.model_dump(exclude_none=True)
        fields["predict_kernel"] = base.model_copy(update={"family": family})
        fields["label"] = f"{config.name}[{family}]"
        sweep.append(MethodConfig.model_validate(fields))
    return sweep


# Single method on one split

def _svm_accuracy(train: Dataset, test: Dataset, spec: KernelSpec, C: float, tol: float, max_iter: int) -> float:
    model = train_multiclass(train, spec, C, tol, max_iter)
    return accuracy(predict_multiclass(model, test.features), test.labels)


def fold_count(requested: int, train: Dataset) -> int:
    """Inner CV folds, lowered to the smallest training class when that class is too small"""
    smallest = int(train.class_counts().min())
    if 2 <= smallest < requested:
        logger.warning(
            "Smallest training class has %d members; using %d-fold CV instead of %d",
            smallest, smallest, requested,
        )
        return smallest
    return requested


def run_method(
    config: MethodConfig,
    train: Dataset,
    test: Dataset,
    seed: int = 0,
    standardize_features: bool = True,
    tol: float = 1e-3,
    max_iter: int = DEFAULT_MAX_ITER,
    threads: int = 1,
) -> MethodOutcome:
    """
    Fit ``config`` on raw ``train`` and score it on raw ``test``. Standardization
    uses training statistics only. The correlation filter and the forest see raw
    values; the SVM fitted after them sees standardized ones.
    """
    spec = config.predict_kernel or RBF
    C = config.C or 1.0

    def scaled(a: Dataset, b: Dataset) -> Tuple[Dataset, Dataset]:
        if not standardize_features:
            return a, b
        a_std, stats = standardize(a)
        b_std, _ = standardize(b, stats)
        return a_std, b_std

    if config.method == "correlation":
        sweep = sweep_correlation_thresholds(
            train, test,
            thresholds=config.correlation_thresholds or DEFAULT_THRESHOLDS,
            spec=spec, C=C, standardize_features=standardize_features, tol=tol, max_iter=max_iter,
        )
        return MethodOutcome(sweep.best_accuracy, len(sweep.best_kept))

    if config.method == "rf_rfe":
        rfe = rf_rfe(train, config.n_trees or DEFAULT_TREES, derive_seed(seed, FOREST_STREAM), config.mtry, threads)
        fit_data, eval_data = scaled(reduce(train, rfe.best_subset), reduce(test, rfe.best_subset))
        return MethodOutcome(_svm_accuracy(fit_data, eval_data, spec, C, tol, max_iter), len(rfe.best_subset))

    fit_data, eval_data = scaled(train, test)
    if config.method == "original":
        return MethodOutcome(_svm_accuracy(fit_data, eval_data, spec, C, tol, max_iter), train.p)

    if config.method == "pca":
        q = config.max_components or min(train.n - 1, train.p)
        basis = pca_fit(fit_data, q)
        search = pca_svm_search(fit_data, eval_data, basis, spec, C, tol, max_iter)
        return MethodOutcome(search.accuracies[search.best_k - 1], search.best_k)

    selector = StepwiseSelector(
        spec_select=config.select_kernel or RBF,
        spec_predict=spec,
        C=C,
        folds=fold_count(config.folds or 5, train),
        tol=tol,
        max_iter=max_iter,
        threads=threads,
    )
    selection = selector.select(fit_data, seed=seed, threshold=config.threshold)
    reduced_acc = _svm_accuracy(
        reduce(fit_data, selection.selected), reduce(eval_data, selection.selected), spec, C, tol, max_iter
    )
    return MethodOutcome(reduced_acc, len(selection.selected))


# Benchmark

def _check_methods(methods: Sequence[MethodConfig]) -> None:
    if not methods:
        raise InputValidationError("At least one method must be configured")
    names = [m.name for m in methods]
    duplicates = sorted({n for n in names if names.count(n) > 1})
    if duplicates:
        raise InputValidationError(f"Method labels must be unique; repeated: {duplicates}")


def rank_methods(means: Sequence[Optional[float]]) -> List[int]:
    """1-based ranks by descending mean; ties keep declaration order; missing means rank last"""
    order = sorted(
        range(len(means)),
        key=lambda i: (means[i] is None, -(means[i] or 0.0), i),
    )
    ranks = [0] * len(means)
    for position, i in enumerate(order, start=1):
        ranks[i] = position
    return ranks


def _summarize(config: MethodConfig, values: List[Optional[MethodOutcome]], rank: int) -> MethodSummary:
    accuracies = [None if v is None else v.accuracy for v in values]
    present = [a for a in accuracies if a is not None]
    mean = float(np.mean(present)) if present else None
    sd = float(np.std(present, ddof=1)) if len(present) > 1 else (0.0 if present else None)
    return MethodSummary(
        label=config.name,
        method=config.method,
        accuracies=tuple(accuracies),
        selected_counts=tuple(None if v is None else v.n_selected for v in values),
        mean=mean,
        sd=sd,
        rank=rank,
        n_missing=len(values) - len(present),
    )


def run_benchmark(
    d: Dataset,
    methods: Sequence[MethodConfig],
    repetitions: int = 100,
    master_seed: int = 0,
    standardize_features: bool = True,
    threads: int = 1,
    tol: float = 1e-3,
    max_iter: int = DEFAULT_MAX_ITER,
    dataset_label: str = "dataset",
    progress: bool = False,
) -> EvaluationReport:
    if repetitions < 1:
        raise InputValidationError("repetitions must be >= 1")
    _check_methods(methods)
    logger.info("Benchmark: %d methods x %d repetitions on %s", len(methods), repetitions, dataset_label)

    bar = tqdm(total=repetitions, desc=dataset_label, unit="rep", disable=not progress)
    bar_lock = threading.Lock()
    # repetitions run concurrently; methods inside a repetition stay single-threaded
    inner_threads = 1 if threads > 1 and repetitions > 1 else threads

    def repetition(r: int):
        split = stratified_half_split(d, derive_seed(master_seed, r))
        train, test = take_samples(d, split.train), take_samples(d, split.test)
        outcomes: List[Optional[MethodOutcome]] = []
        failures: List[MethodFailure] = []
        for config in methods:
            try:
                outcomes.append(
                    run_method(config, train, test, split.seed, standardize_features, tol, max_iter, inner_threads)
                )
            except RECOVERABLE_ERRORS as e:
                logger.warning("Repetition %d: %s failed: %s", r, config.name, e)
                outcomes.append(None)
                failures.append(
                    MethodFailure(repetition=r, method=config.name, error_type=type(e).__name__, message=str(e))
                )
        with bar_lock:
            bar.update(1)
        return split_digest(split), outcomes, failures

    try:
        results = parallel_map(repetition, range(repetitions), threads)
    finally:
        bar.close()

    per_rep = [outcomes for _, outcomes, _ in results]
    per_method = [[per_rep[r][m] for r in range(repetitions)] for m in range(len(methods))]
    means = [
        float(np.mean([v.accuracy for v in values if v is not None])) if any(v is not None for v in values) else None
        for values in per_method
    ]
    ranks = rank_methods(means)
    report = EvaluationReport(
        dataset_label=dataset_label,
        per_method={
            config.name: _summarize(config, values, rank)
            for config, values, rank in zip(methods, per_method, ranks)
        },
        repetitions=repetitions,
        master_seed=master_seed,
        split_digests=tuple(digest for digest, _, _ in results),
        failures=tuple(f for _, _, failures in results for f in failures),
    )
    for summary in report.per_method.values():
        logger.info("%s: mean accuracy %s, rank %d", summary.label, _percent(summary.mean), summary.rank)
    return report


# Reporting

def _percent(mean: Optional[float]) -> str:
    return "n/a" if mean is None else f"{100.0 * mean:.2f}"


def rank_table(reports: Union[EvaluationReport, Sequence[EvaluationReport]]) -> str:
    """Rows are run labels, columns are methods, cells are ``mean%^rank``"""
    if isinstance(reports, EvaluationReport):
        reports = [reports]
    columns: List[str] = []
    for report in reports:
        columns.extend(label for label in report.per_method if label not in columns)

    rows = []
    for report in reports:
        row = {"dataset": report.dataset_label}
        for label in columns:
            summary = report.per_method.get(label)
            row[label] = "" if summary is None else f"{_percent(summary.mean)}^{summary.rank}"
        rows.append(row)
    frame = pd.DataFrame(rows, columns=["dataset", *columns])
    return frame.to_string(index=False) + "\n\n" + TIE_FOOTNOTE + "\n"


def rank_table_frame(reports: Union[EvaluationReport, Sequence[EvaluationReport]]) -> pd.DataFrame:
    if isinstance(reports, EvaluationReport):
        reports = [reports]
    rows = [
        {
            "dataset": report.dataset_label,
            "label": summary.label,
            "method": summary.method,
            "mean_accuracy": summary.mean,
            "sd": summary.sd,
            "rank": summary.rank,
            "n_missing": summary.n_missing,
        }
        for report in reports
        for summary in report.per_method.values()
    ]
    return pd.DataFrame(rows, columns=["dataset", "label", "method", "mean_accuracy", "sd", "rank", "n_missing"])


def accuracies_frame(report: EvaluationReport) -> pd.DataFrame:
    frame = pd.DataFrame({
        "repetition": range(report.repetitions),
        "split_digest": report.split_digests,
    })
    for label, summary in report.per_method.items():
        frame[label] = pd.array(summary.accuracies, dtype="Float64")
        frame[f"{label}_selected"] = pd.array(summary.selected_counts, dtype="Int64")
    return frame


def build_manifest(
    report: EvaluationReport,
    d: Dataset,
    source: DataSource,
    methods: Sequence[MethodConfig],
    standardize_features: bool,
    tol: float = 1e-3,
    max_iter: int = DEFAULT_MAX_ITER,
) -> RunManifest:
    return RunManifest(
        version=__version__,
        data=source,
        dataset_label=report.dataset_label,
        dataset_digest=dataset_digest(d),
        methods=tuple(methods),
        repetitions=report.repetitions,
        master_seed=report.master_seed,
        standardize=standardize_features,
        svm_tol=tol,
        svm_max_iter=max_iter,
        split_digests=report.split_digests,
    )


def read_manifest(path: Union[str, Path]) -> RunManifest:
    return RunManifest.model_validate_json(Path(path).read_text())


def check_replay(manifest: RunManifest, d: Dataset) -> None:
    digest = dataset_digest(d)
    if digest != manifest.dataset_digest:
        raise InputValidationError(
            f"Dataset digest {digest[:12]} does not match manifest digest {manifest.dataset_digest[:12]}"
        )


def write_report(report: EvaluationReport, manifest: RunManifest, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """Write rank_table.txt, rank_table.csv, accuracies.csv, manifest.json and report.json"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "rank_table": out_dir / "rank_table.txt",
        "rank_table_csv": out_dir / "rank_table.csv",
        "accuracies": out_dir / "accuracies.csv",
        "manifest": out_dir / "manifest.json",
        "report": out_dir / "report.json",
    }
    paths["rank_table"].write_text(rank_table(report))
    rank_table_frame(report).to_csv(paths["rank_table_csv"], index=False, float_format="%.17g", lineterminator="\n")
    accuracies_frame(report).to_csv(paths["accuracies"], index=False, float_format="%.17g", lineterminator="\n")
    paths["manifest"].write_text(manifest.model_dump_json(indent=2) + "\n")
    paths["report"].write_text(report.model_dump_json(indent=2) + "\n")
    for path in paths.values():
        logger.info("Wrote %s", path)
    return paths


class Benchmark:
    """Repeated half-split comparison of a fixed method list"""

    def __init__(
        self,
        methods: Sequence[MethodConfig],
        repetitions: int = 100,
        master_seed: int = 0,
        standardize_features: bool = True,
        threads: int = 1,
        tol: float = 1e-3,
        max_iter: int = DEFAULT_MAX_ITER,
    ):
        _check_methods(methods)
        self.methods = list(methods)
        self.repetitions = repetitions
        self.master_seed = master_seed
        self.standardize_features = standardize_features
        self.threads = threads
        self.tol = tol
        self.max_iter = max_iter

    @classmethod
    def from_manifest(cls, manifest: RunManifest, threads: int = 1) -> "Benchmark":
        return cls(
            manifest.methods,
            repetitions=manifest.repetitions,
            master_seed=manifest.master_seed,
            standardize_features=manifest.standardize,
            threads=threads,
            tol=manifest.svm_tol,
            max_iter=manifest.svm_max_iter,
        )

    def run(self, d: Dataset, dataset_label: str = "dataset", progress: bool = False) -> EvaluationReport:
        return run_benchmark(
            d,
            self.methods,
            repetitions=self.repetitions,
            master_seed=self.master_seed,
            standardize_features=self.standardize_features,
            threads=self.threads,
            tol=self.tol,
            max_iter=self.max_iter,
            dataset_label=dataset_label,
            progress=progress,
        )

    def manifest(self, report: EvaluationReport, d: Dataset, source: DataSource) -> RunManifest:
        return build_manifest(report, d, source, self.methods, self.standardize_features, self.tol, self.max_iter)
