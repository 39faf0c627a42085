"""Cross-validated experiment protocol and its reports."""

from .config import BASE_VARIANTS, PRESETS, VARIANTS, ExperimentConfig, Preset, derive_seed
from .experiment import (ATTACK_STREAM, FoldRun, dataset_digest, evaluate_variant, fit_real_only,
                         fold_record, load_dataset, rebuild_training_set, run_attack_benchmark,
                         run_experiment, run_inoculation_study, run_pretraining, split_for_seed,
                         train_attack_generators)
from .report import (CELL_COLUMNS, ExperimentReport, ReportError, emit_report, fmt_mean_std,
                     mean_std, plot_series)

__all__ = [
    "ATTACK_STREAM", "BASE_VARIANTS", "CELL_COLUMNS", "ExperimentConfig", "ExperimentReport",
    "FoldRun", "PRESETS", "Preset", "ReportError", "VARIANTS", "dataset_digest", "derive_seed",
    "emit_report", "evaluate_variant", "fit_real_only", "fmt_mean_std", "fold_record",
    "load_dataset", "mean_std", "plot_series", "rebuild_training_set", "run_attack_benchmark",
    "run_experiment", "run_inoculation_study", "run_pretraining", "split_for_seed",
    "train_attack_generators",
]
