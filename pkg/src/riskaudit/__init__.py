"""Subgroup discrimination and strong-calibration audits for risk models."""
from .calibration import (
    CalibrationConfig,
    CalibrationVerdict,
    Direction,
    cusum_statistic,
    run_audit,
    run_cv_audit,
    run_layout_audit,
    run_split_audit,
    simulate_null,
)
from .data import AuditDataset, SubgroupFilter, design_matrix, load_dataset, save_dataset
from .errors import AuditError
from .report import build_comparison_tables, build_performance_table
from .residual import ResidualModelConfig, fit_ensemble, fit_klr
from .roc import auroc, delong_correlated, delong_uncorrelated, operating_threshold
from .synth import PopulationSpec, ScoreLaw, default_template, generate

__version__ = "0.1.0"
