"""Nystrom stochastic gradient methods for least-squares regression in an RKHS."""

from .data import Dataset, eval_grid, f_rho, gen_toy, load_csv, save_csv
from .errors import CSVParseError, DegenerateFactorError, InputError, NumericalError
from .evaluation import (
    CVConfig,
    RiskReport,
    batch_sample_iteration,
    cross_validate_step_size,
    empirical_risk,
    generalization_error,
    krr_solve,
    truncate,
)
from .kernel import KernelSpec, eval_kernel, gram
from .nystrom import NystromFactor, build_factor, factor, select_landmarks
from .sgm import (
    ModelState,
    Predictor,
    RegimeParams,
    TrainConfig,
    Trajectory,
    fit,
    pass_count,
    predict,
    regime_schedule,
    step,
    train,
)

__version__ = "0.1.0"
