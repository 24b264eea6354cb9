#!/usr/bin/env python3
"""
StepSVM command line: select, reduce, compare, distances, synth.

Exit codes: 0 success, 1 invalid input, 2 I/O failure, 3 solver failure.
Diagnostics go to stderr; stdout carries the human-readable summary only.
"""

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path
from typing import List, Optional, Sequence, Union

from pydantic import ValidationError

from src import __version__
from src.core.config import Settings, configure_logging, load_settings
from src.core.data_model import load_csv, load_feature_table, save_csv, standardize, synth_planted
from src.core.errors import InputValidationError, SolverError, StepSvmError
from src.core.evaluation import (
    METHOD_ORDER,
    Benchmark,
    apply_preset,
    check_replay,
    default_methods,
    kernel_sweep,
    rank_table,
    read_manifest,
    write_report,
)
from src.core.kernels import format_kernel_spec, parse_kernel_spec
from src.core.similarity import (
    distance_matrix,
    export_heatmap_csv,
    export_heatmap_pgm,
    feature_panel,
    group_contrast,
)
from src.core.stepwise import StepwiseSelector, read_selection_report, reduce, write_selection_report
from src.models.schemas import DataSource, Dataset, FeatureTable, KernelSpec, MethodConfig, RunConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_SOLVER = 3


class CliParser(argparse.ArgumentParser):
    """Argument errors are input errors (exit 1), not argparse's default exit 2"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputValidationError(message)


# Argument helpers

def parse_threshold(text: str) -> Fraction:
    try:
        value = Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise InputValidationError(f"Invalid threshold '{text}'; use a fraction like 6/181 or a decimal") from None
    if not 0 <= value <= 1:
        raise InputValidationError(f"Threshold {text} must lie in [0, 1]")
    return value


def parse_float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise InputValidationError(f"Invalid number list '{text}'") from None


def data_source(args) -> DataSource:
    return DataSource(
        path=args.data,
        orientation=args.orientation,
        label_column=args.label_column,
        id_column=args.id_column,
        header=not args.no_header,
    )


def load_source(source: DataSource) -> Dataset:
    return load_csv(
        source.path,
        orientation=source.orientation,
        label_column=source.label_column,
        id_column=source.id_column,
        header=source.header,
    )


def load_unlabeled(source: DataSource) -> FeatureTable:
    """Every column except the id (and a named label column, if given) is a feature"""
    return load_feature_table(
        source.path,
        orientation=source.orientation,
        id_column=source.id_column,
        header=source.header,
        drop_columns=(source.label_column,) if source.label_column else (),
    )


def pick(value, fallback):
    return fallback if value is None else value


def explicit_kernel(text: Optional[str]) -> Optional[KernelSpec]:
    return None if text is None else parse_kernel_spec(text)


# Commands

def cmd_select(args, settings: Settings, run: RunConfig) -> int:
    d = load_source(run.data)
    select_kernel = explicit_kernel(args.select_kernel)
    predict_kernel = explicit_kernel(args.predict_kernel)
    threshold = None if args.threshold is None else parse_threshold(args.threshold)
    if args.preset:
        preset = apply_preset(
            [MethodConfig(method="stepwise")], args.preset, args.use_preset_threshold, predict_kernel, select_kernel
        )[0]
        predict_kernel, select_kernel = preset.predict_kernel, preset.select_kernel
        threshold = pick(threshold, preset.threshold)
    select_kernel = select_kernel or parse_kernel_spec(settings.select_kernel)
    predict_kernel = predict_kernel or parse_kernel_spec(settings.predict_kernel)

    fit_data = standardize(d)[0] if run.standardize else d
    print(f"Selecting features in {run.data.path} (n={d.n}, p={d.p}, k={d.k})")
    selector = StepwiseSelector(
        spec_select=select_kernel,
        spec_predict=predict_kernel,
        C=pick(args.C, settings.svm_c),
        folds=pick(args.folds, settings.cv_folds),
        tol=settings.svm_tol,
        max_iter=settings.svm_max_iter,
        threads=run.threads,
    )
    result = selector.select(fit_data, seed=run.master_seed, threshold=threshold)
    reduced = reduce(d, result.selected)

    out_dir = Path(run.output_dir)
    report_path = write_selection_report(result, out_dir / "selection.json")
    data_path = save_csv(reduced, out_dir / "reduced.csv", orientation=args.orientation)

    print(f"Selected {len(result.selected)} of {d.p} features at APR threshold {result.chosen_threshold}")
    print(f"Cross-validated accuracy: {100.0 * result.validation_accuracy:.2f}% ({result.mode} mode)")
    print(f"Kernels: select {format_kernel_spec(select_kernel)}, predict {format_kernel_spec(predict_kernel)}")
    print(f"Report: {report_path}")
    print(f"Reduced data: {data_path}")
    return EXIT_OK


def _selected_positions(report_path: str, d: FeatureTable, data_path: str) -> List[int]:
    selection = read_selection_report(report_path)
    positions = {name: j for j, name in enumerate(d.feature_names)}
    missing = [name for name in selection.selected_names if name not in positions]
    if missing:
        raise InputValidationError(f"Selected features not found in {data_path}: {missing[:5]}")
    return [positions[name] for name in selection.selected_names] or list(selection.selected)


def cmd_reduce(args, settings: Settings, run: RunConfig) -> int:
    d = load_source(run.data)
    reduced = reduce(d, _selected_positions(args.report, d, args.data))
    out_path = save_csv(reduced, args.out or Path(run.output_dir) / "reduced.csv", orientation=args.orientation)
    print(f"Reduced {d.p} features to {reduced.p}")
    print(f"Reduced data: {out_path}")
    return EXIT_OK


def compare_methods(args, settings: Settings) -> List[MethodConfig]:
    select_kernel = explicit_kernel(args.select_kernel)
    predict_kernel = explicit_kernel(args.predict_kernel)
    methods = default_methods(
        select_kernel=select_kernel or parse_kernel_spec(settings.select_kernel),
        predict_kernel=predict_kernel or parse_kernel_spec(settings.predict_kernel),
        C=pick(args.C, settings.svm_c),
        folds=pick(args.folds, settings.cv_folds),
        correlation_thresholds=(
            parse_float_list(args.correlation_thresholds)
            if args.correlation_thresholds else settings.correlation_thresholds
        ),
        n_trees=pick(args.trees, settings.forest_trees),
    )
    if args.methods:
        wanted = [name.strip() for name in args.methods.split(",") if name.strip()]
        unknown = [name for name in wanted if name not in METHOD_ORDER]
        if unknown:
            raise InputValidationError(f"Unknown methods {unknown}; choose from {list(METHOD_ORDER)}")
        by_name = {m.method: m for m in methods}
        methods = [by_name[name] for name in wanted]
    if args.preset:
        methods = apply_preset(methods, args.preset, args.use_preset_threshold, predict_kernel, select_kernel)
    if args.kernel_sweep:
        methods = [swept for config in methods for swept in kernel_sweep(config)]
    return methods


def cmd_compare(args, settings: Settings, run: RunConfig) -> int:
    if args.replay:
        manifest = read_manifest(args.replay)
        source = manifest.data
        d = load_source(source)
        check_replay(manifest, d)
        benchmark = Benchmark.from_manifest(manifest, threads=run.threads)
        label = manifest.dataset_label
    else:
        source = run.data
        d = load_source(source)
        benchmark = Benchmark(
            run.methods,
            repetitions=run.repetitions,
            master_seed=run.master_seed,
            standardize_features=run.standardize,
            threads=run.threads,
            tol=settings.svm_tol,
            max_iter=settings.svm_max_iter,
        )
        label = args.label or Path(source.path).stem

    print(f"Comparing {len(benchmark.methods)} methods over {benchmark.repetitions} repetitions on {label}")
    report = benchmark.run(d, dataset_label=label, progress=args.progress)
    manifest_out = benchmark.manifest(report, d, source)
    if args.replay and manifest_out.split_digests != manifest.split_digests:
        raise InputValidationError("Replayed splits differ from the manifest")
    paths = write_report(report, manifest_out, run.output_dir)

    print(rank_table(report), end="")
    if report.failures:
        print(f"{len(report.failures)} method runs failed; see accuracies.csv for missing values")
    print(f"Report written to: {paths['rank_table'].parent}")
    return EXIT_OK


def cmd_distances(args, settings: Settings, run: RunConfig) -> int:
    d: Union[Dataset, FeatureTable] = load_unlabeled(run.data) if args.unlabeled else load_source(run.data)
    values = standardize(d)[0] if run.standardize else d
    subset = _selected_positions(args.subset, d, args.data) if args.subset else None

    matrices = {"full": distance_matrix(values, label="all")}
    if subset is not None:
        matrices["reduced"] = distance_matrix(values, subset, label=f"{len(subset)} selected")
    labels = d.labels if isinstance(d, Dataset) else None
    contrast = {}
    if labels is not None:
        for name, dm in matrices.items():
            try:
                contrast[name] = group_contrast(dm, labels)
            except InputValidationError as e:
                logger.warning("Group contrast for %s distances skipped: %s", name, e)

    out_dir = Path(run.output_dir)
    for name, dm in matrices.items():
        path = export_heatmap_csv(
            dm.values, dm.sample_names, dm.sample_names, out_dir / f"distances_{name}.csv",
            labels=labels, reorder=args.reorder and labels is not None,
        )
        print(f"{name} distances ({dm.feature_subset_label}): {path}")
        if args.pgm:
            export_heatmap_pgm(dm.values, out_dir / f"distances_{name}.pgm")
    if subset is not None:
        panel, rows, cols = feature_panel(values, subset)
        export_heatmap_csv(panel, rows, cols, out_dir / "feature_panel.csv")
    if contrast:
        (out_dir / "contrast.json").write_text(json.dumps(contrast, indent=2, sort_keys=True) + "\n")
        for name, value in contrast.items():
            print(f"Group contrast ({name}): {value:.4f}")
    return EXIT_OK


def cmd_synth(args, settings: Settings, run: RunConfig) -> int:
    seed = run.master_seed
    d, informative = synth_planted(args.n, args.p, args.informative, args.k, args.effect, seed)
    out_dir = Path(run.output_dir)
    data_path = save_csv(d, out_dir / "synthetic.csv", orientation=args.orientation)
    truth_path = out_dir / "ground_truth.txt"
    truth_path.write_text("".join(f"{d.feature_names[j]}\n" for j in informative))
    print(f"Planted {len(informative)} informative features among {d.p} (n={d.n}, k={d.k}, seed={seed})")
    print(f"Data: {data_path}")
    print(f"Ground truth: {truth_path}")
    return EXIT_OK


# Parser

def _common_parser() -> argparse.ArgumentParser:
    common = CliParser(add_help=False)
    common.add_argument("--config", help="key=value settings file (STEPSVM_* names); flags win")
    common.add_argument("--threads", type=int, help="worker threads (default: settings, 1)")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="log level (default: INFO)")
    common.add_argument("--seed", type=int, help="master seed for every random choice (default: 0)")
    return common


def _data_parser() -> argparse.ArgumentParser:
    data = CliParser(add_help=False)
    data.add_argument("--data", help="input CSV file")
    data.add_argument(
        "--orientation", choices=["samples_as_rows", "features_as_rows"], default="samples_as_rows",
        help="file layout (default: %(default)s)",
    )
    data.add_argument("--label-column", help="label column name or position (default: first field)")
    data.add_argument("--id-column", help="sample name column (default: none)")
    data.add_argument("--no-header", action="store_true", help="first line is data, not names")
    return data


def _svm_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--select-kernel", help="kernel for per-feature scoring, e.g. rbf or rbf:gamma=0.5 (default: rbf)")
    parser.add_argument("--predict-kernel", help="kernel for the final classifier (default: rbf)")
    parser.add_argument("--C", type=float, help="box constraint (default: 1.0)")
    parser.add_argument("--folds", type=int, help="cross-validation folds (default: 5)")
    parser.add_argument("--preset", help="dataset preset: hedenfalk, gordon, alon, khan, shipp")
    parser.add_argument("--use-preset-threshold", action="store_true", help="apply the preset's fixed APR threshold")
    parser.add_argument("--standardize", dest="standardize", action="store_true", default=None,
                        help="standardize features with training statistics (default)")
    parser.add_argument("--no-standardize", dest="standardize", action="store_false")
    parser.add_argument("--out", help="output directory (default: results)")


def build_parser() -> argparse.ArgumentParser:
    common, data = _common_parser(), _data_parser()
    parser = CliParser(prog="stepsvm", description="Stepwise SVM feature selection and benchmarks")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    select = commands.add_parser("select", parents=[common, data], help="run stepwise SVM selection")
    _svm_options(select)
    select.add_argument("--threshold", help="fixed APR threshold, e.g. 6/181 or 0.0331")

    reduce_cmd = commands.add_parser("reduce", parents=[common, data], help="apply a selection report to a dataset")
    reduce_cmd.add_argument("--report", required=True, help="selection.json written by select")
    reduce_cmd.add_argument("--out", help="output CSV (default: results/reduced.csv)")

    compare = commands.add_parser("compare", parents=[common, data], help="benchmark methods over repeated splits")
    _svm_options(compare)
    compare.add_argument("--methods", help=f"comma list from {','.join(METHOD_ORDER)} (default: all)")
    compare.add_argument("--reps", type=int, help="repetitions (default: 100)")
    compare.add_argument("--trees", type=int, help="trees per forest (default: 500)")
    compare.add_argument("--correlation-thresholds", help="comma list (default: 0.7,...,0.95)")
    compare.add_argument("--kernel-sweep", action="store_true", help="run every method with all four kernels")
    compare.add_argument("--replay", help="manifest.json of an earlier run to reproduce")
    compare.add_argument("--label", help="dataset label in the rank table (default: file stem)")
    compare.add_argument("--progress", action="store_true", help="show a progress bar on stderr")

    distances = commands.add_parser("distances", parents=[common, data], help="export sample distance heatmaps")
    distances.add_argument("--subset", help="selection.json restricting the reduced matrix")
    distances.add_argument("--unlabeled", action="store_true", help="skip group contrast and class ordering")
    distances.add_argument("--standardize", action="store_true", help="distances on standardized values (default: raw)")
    distances.add_argument("--reorder", action="store_true", help="group rows by class, then name")
    distances.add_argument("--pgm", action="store_true", help="also write grayscale PGM images")
    distances.add_argument("--out", help="output directory (default: results)")

    synth = commands.add_parser("synth", parents=[common], help="write a planted synthetic dataset")
    synth.add_argument("--n", type=int, default=60, help="samples (default: %(default)s)")
    synth.add_argument("--p", type=int, default=500, help="features (default: %(default)s)")
    synth.add_argument("--informative", type=int, default=10, help="planted features (default: %(default)s)")
    synth.add_argument("--k", type=int, default=2, help="classes (default: %(default)s)")
    synth.add_argument("--effect", type=float, default=2.0, help="class mean shift (default: %(default)s)")
    synth.add_argument(
        "--orientation", choices=["samples_as_rows", "features_as_rows"], default="samples_as_rows",
        help="file layout (default: %(default)s)",
    )
    synth.add_argument("--out", help="output directory (default: results)")
    return parser



COMMANDS = {
    "select": cmd_select,
    "reduce": cmd_reduce,
    "compare": cmd_compare,
    "distances": cmd_distances,
    "synth": cmd_synth,
}


def resolve_settings(args) -> Settings:
    """Settings from --config (or config/.env), then explicit global flags"""
    settings = load_settings(args.config)
    overrides = {
        "threads": args.threads,
        "log_level": args.log_level,
        "seed": args.seed,
    }
    return settings.model_copy(update={k: v for k, v in overrides.items() if v is not None})


def build_run_config(args, settings: Settings) -> RunConfig:
    """Validated run description; built before any data is read"""
    command = args.command
    replay = getattr(args, "replay", None)
    if command != "synth" and not args.data and not replay:
        raise InputValidationError(f"{command} needs --data")
    out = None if command == "reduce" else getattr(args, "out", None)
    return RunConfig(
        command=command,
        data=data_source(args) if getattr(args, "data", None) else None,
        methods=tuple(compare_methods(args, settings)) if command == "compare" and not replay else (),
        master_seed=settings.seed,
        repetitions=pick(getattr(args, "reps", None), settings.repetitions),
        output_dir=pick(out, settings.output_dir),
        threads=settings.threads,
        standardize=pick(getattr(args, "standardize", None), settings.standardize),
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        settings = resolve_settings(args)
        run = build_run_config(args, settings)
        configure_logging(settings.log_level, settings.log_file)
        return COMMANDS[args.command](args, settings, run)
    except SolverError as e:
        print(f"Error: solver failed: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except (InputValidationError, ValidationError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except StepSvmError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
