"""Monte Carlo evaluation harness and exact-enumeration oracle."""

from .experiment import (
    ExperimentConfig,
    PopulationSpec,
    Record,
    SimulationReport,
    build_population,
    build_report,
    default_synthetic,
    read_estimates_log,
    report_from_log,
    run_experiment,
    write_estimates_log,
    write_report,
)
from .export import export_annotated, sample_components
from .oracle import OracleResult, OutcomeSpaceTooLarge, enumerate_exact_inclusion
from .summary import (
    augment_complements,
    complement_points,
    coverage_table,
    fit_parabola,
    relative_bias,
    relative_efficiency,
    summarize,
)

__all__ = [
    "ExperimentConfig",
    "OracleResult",
    "OutcomeSpaceTooLarge",
    "PopulationSpec",
    "Record",
    "SimulationReport",
    "augment_complements",
    "build_population",
    "build_report",
    "complement_points",
    "coverage_table",
    "default_synthetic",
    "enumerate_exact_inclusion",
    "export_annotated",
    "fit_parabola",
    "read_estimates_log",
    "relative_bias",
    "relative_efficiency",
    "report_from_log",
    "run_experiment",
    "sample_components",
    "summarize",
    "write_estimates_log",
    "write_report",
]
