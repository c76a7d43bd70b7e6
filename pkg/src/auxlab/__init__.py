"""auxlab: a laboratory for added-neuron objective transformations.

Wrap any differentiable model's training objective with one exponential
neuron per output unit plus an amplitude regularizer, train it, chart the
resulting landscape, and verify the claimed optimality properties with
independent numerical oracles.
"""

from .augment import (
    AuxParams,
    Dataset,
    Reduction,
    augmented_objective,
    augmented_objective_fixed_theta,
    g_eval,
    original_objective,
    vanish_check,
)
from .autodiff import (
    GradientProgram,
    Layout,
    ParamVector,
    finite_diff_gradient,
)
from .criteria import LossCriterion, assumption_report, loss_gradient, loss_value
from .errors import (
    BudgetError,
    ConfigError,
    DataError,
    DimensionError,
    ExponentOverflow,
    InvalidTarget,
    UnknownFixture,
)
from .models import MLP, BumpSlopeCurve, GaussianBumpCurve, bump_curve, parameter_jacobian
from .optimize import (
    MonitorAction,
    MonitorConfig,
    OptimizerConfig,
    RunRecord,
    Termination,
    TrainingProblem,
    minimize,
    monitor_check,
    multi_seed_experiment,
)
from .oracles import (
    exp_interp,
    grid_global_min,
    gradient_factorization,
    per_sample_gradient_check,
    pgb_check,
    poly_interp,
    verify_local_min,
)
from .verdict import OracleVerdict

__version__ = "0.1.0"

__all__ = [
    "AuxParams",
    "BudgetError",
    "BumpSlopeCurve",
    "ConfigError",
    "DataError",
    "Dataset",
    "DimensionError",
    "ExponentOverflow",
    "GaussianBumpCurve",
    "GradientProgram",
    "InvalidTarget",
    "Layout",
    "LossCriterion",
    "MLP",
    "MonitorAction",
    "MonitorConfig",
    "OptimizerConfig",
    "OracleVerdict",
    "ParamVector",
    "Reduction",
    "RunRecord",
    "Termination",
    "TrainingProblem",
    "UnknownFixture",
    "assumption_report",
    "augmented_objective",
    "augmented_objective_fixed_theta",
    "bump_curve",
    "exp_interp",
    "finite_diff_gradient",
    "g_eval",
    "grid_global_min",
    "gradient_factorization",
    "loss_gradient",
    "loss_value",
    "minimize",
    "monitor_check",
    "multi_seed_experiment",
    "original_objective",
    "parameter_jacobian",
    "per_sample_gradient_check",
    "pgb_check",
    "poly_interp",
    "vanish_check",
    "verify_local_min",
]
