"""Closed-form optima, collapse metrics, and gradient-descent trainers for
regularized multivariate regression with free features."""

from .backend import BACKEND, HAVE_COMPILED
from .dataset import (
    RegressionDataset,
    SyntheticSpec,
    TargetMatrix,
    TargetStats,
    compute_target_stats,
    generate_synthetic,
    load_matrix,
    oriented,
    symmetric_psd_sqrt,
    write_matrix,
)
from .errors import (
    BoundaryCWarning,
    ConfigMissing,
    DegenerateInput,
    DimensionError,
    DivergenceError,
    EmptyInput,
    GammaOutOfRangeWarning,
    NotPSD,
    NrcLabError,
    NumericalError,
    ParseError,
    RankDeficientTargets,
    RankDeficientW,
    RegimeError,
    UseNoRegularizationSolver,
    ValidationError,
    ZeroFeatureWarning,
)
from .metrics import (
    NRCReport,
    append_report_csv,
    explained_variance_ratio,
    nrc1,
    nrc2,
    nrc3,
    nrc_report,
    optimal_gamma,
)
from .trainer import (
    MLPArch,
    MLPParams,
    TrainConfig,
    TrainTrace,
    finite_diff_check,
    finite_diff_check_mlp,
    init_mlp_params,
    mlp_forward,
    save_mlp_params,
    save_ufm_state,
    train_mlp,
    train_ufm_gd,
    ufm_gradients,
    ufm_loss,
)
from .ufm import (
    GradientResiduals,
    NoRegSolution,
    UFMConfig,
    UFMSolution,
    optimal_loss,
    residual,
    sample_semi_orthogonal,
    solve_closed_form,
    solve_no_regularization,
    verify_critical_point,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "HAVE_COMPILED",
    "BoundaryCWarning",
    "ConfigMissing",
    "DegenerateInput",
    "DimensionError",
    "DivergenceError",
    "EmptyInput",
    "GammaOutOfRangeWarning",
    "GradientResiduals",
    "MLPArch",
    "MLPParams",
    "NRCReport",
    "NoRegSolution",
    "NotPSD",
    "NrcLabError",
    "NumericalError",
    "ParseError",
    "RankDeficientTargets",
    "RankDeficientW",
    "RegimeError",
    "RegressionDataset",
    "SyntheticSpec",
    "TargetMatrix",
    "TargetStats",
    "TrainConfig",
    "TrainTrace",
    "UFMConfig",
    "UFMSolution",
    "UseNoRegularizationSolver",
    "ValidationError",
    "ZeroFeatureWarning",
    "append_report_csv",
    "compute_target_stats",
    "explained_variance_ratio",
    "finite_diff_check",
    "finite_diff_check_mlp",
    "generate_synthetic",
    "init_mlp_params",
    "load_matrix",
    "mlp_forward",
    "nrc1",
    "nrc2",
    "nrc3",
    "nrc_report",
    "optimal_gamma",
    "optimal_loss",
    "oriented",
    "residual",
    "sample_semi_orthogonal",
    "save_mlp_params",
    "save_ufm_state",
    "solve_closed_form",
    "solve_no_regularization",
    "symmetric_psd_sqrt",
    "train_mlp",
    "train_ufm_gd",
    "ufm_gradients",
    "ufm_loss",
    "verify_critical_point",
    "write_matrix",
]
