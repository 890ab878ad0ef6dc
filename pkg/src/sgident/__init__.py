"""Streaming identification with a modified stochastic-gradient gain schedule.

The package couples a recursive estimator (modified and classical gain
schedules), a catalog of predictor/loss pairs, a certainty-equivalence
tracking controller with a simulated lag plant, convergence diagnostics,
and a deterministic benchmark harness with CSV traces and JSON reports.
"""

from .bench import (
    TRACE_COLUMNS,
    CsvStream,
    ExperimentConfig,
    RunReport,
    compare_runs,
    ingest_csv,
    load_config,
    preset_path,
    read_trace,
    render_comparison,
    run_experiment,
    verify_report,
    write_trace,
)
from .control import (
    ControlConfig,
    LagBuffer,
    NoiseSource,
    Plant,
    StepRecord,
    plant_step,
    run_closed_loop,
    solve_control,
)
from .core import (
    GainState,
    HyperParams,
    ModelLossPair,
    ParameterVector,
    Regressor,
    Role,
    check_step_size_cap,
    kahan_add,
)
from .errors import (
    ConfigurationError,
    DataError,
    DomainError,
    NumericError,
    SgidentError,
)
from .metrics import (
    RS_TAIL_LIMIT,
    GradientNoiseReport,
    MetricSeries,
    RSReport,
    average_regret,
    bound_curve,
    gradient_noise,
    minimum_phase_ratio,
    regret_sum,
    relative_error_metric,
    robbins_siegmund_diag,
    tracking_error,
    windowed_means,
)
from .models import (
    PAIR_CATALOG,
    Assumption2Report,
    SaturationSpec,
    catalog_pair,
    hinge_pair,
    linear_mse_pair,
    logistic_pair,
    quadnet_lift,
    quadnet_pair,
    saturation_mean,
    saturation_mean_deriv,
    saturation_pair,
    tanh_mse_pair,
    verify_assumption2,
)
from .sg import (
    DIVERGENCE_NORM,
    EstimatorState,
    classical_sg_step,
    mu_schedule,
    sg_init,
    sg_step,
)

__version__ = "0.1.0"

__all__ = [
    "TRACE_COLUMNS",
    "CsvStream",
    "ExperimentConfig",
    "RunReport",
    "compare_runs",
    "ingest_csv",
    "load_config",
    "preset_path",
    "read_trace",
    "render_comparison",
    "run_experiment",
    "verify_report",
    "write_trace",
    "ControlConfig",
    "LagBuffer",
    "NoiseSource",
    "Plant",
    "StepRecord",
    "plant_step",
    "run_closed_loop",
    "solve_control",
    "GainState",
    "HyperParams",
    "ModelLossPair",
    "ParameterVector",
    "Regressor",
    "Role",
    "check_step_size_cap",
    "kahan_add",
    "ConfigurationError",
    "DataError",
    "DomainError",
    "NumericError",
    "SgidentError",
    "RS_TAIL_LIMIT",
    "GradientNoiseReport",
    "MetricSeries",
    "RSReport",
    "average_regret",
    "bound_curve",
    "gradient_noise",
    "minimum_phase_ratio",
    "regret_sum",
    "relative_error_metric",
    "robbins_siegmund_diag",
    "tracking_error",
    "windowed_means",
    "PAIR_CATALOG",
    "Assumption2Report",
    "SaturationSpec",
    "catalog_pair",
    "hinge_pair",
    "linear_mse_pair",
    "logistic_pair",
    "quadnet_lift",
    "quadnet_pair",
    "saturation_mean",
    "saturation_mean_deriv",
    "saturation_pair",
    "tanh_mse_pair",
    "verify_assumption2",
    "DIVERGENCE_NORM",
    "EstimatorState",
    "classical_sg_step",
    "mu_schedule",
    "sg_init",
    "sg_step",
    "__version__",
]
