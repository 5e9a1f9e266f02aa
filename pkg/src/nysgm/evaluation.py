"""Risk measurement, deterministic baselines and hold-out step-size selection."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .data import Dataset
from .errors import InputError, NumericalError
from .kernel import KernelSpec, as_points, gram
from .nystrom import NystromFactor
from .sgm import TrainConfig, Trajectory, draw_indices, train

TARGET_MODES = ("noisy_y", "noiseless_f_rho")


@dataclass(frozen=True)
class RiskReport:
    empirical_risk: float
    generalization_error: float
    target_mode: str = "noiseless_f_rho"


def _predict(p, X) -> np.ndarray:
    return np.asarray(p(as_points(X)), dtype=np.float64).reshape(-1)


def empirical_risk(p: Callable, data: Dataset) -> float:
    """Mean squared error of ``p`` on the sample."""
    if data.n < 1:
        raise InputError("empty dataset")
    r = _predict(p, data.X) - data.y
    return float(np.mean(r * r))


def generalization_error(p: Callable, eval_points, targets) -> float:
    """Mean of ``(p(x) - target(x))^2`` over an evaluation measure."""
    X = as_points(eval_points)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if X.shape[0] != targets.shape[0] or X.shape[0] < 1:
        raise InputError(f"{X.shape[0]} points vs {targets.shape[0]} targets")
    r = _predict(p, X) - targets
    return float(np.mean(r * r))


def risk_report(p: Callable, data: Dataset, eval_points, targets, target_mode="noiseless_f_rho") -> RiskReport:
    if target_mode not in TARGET_MODES:
        raise InputError(f"unknown target mode {target_mode!r}")
    return RiskReport(empirical_risk(p, data), generalization_error(p, eval_points, targets), target_mode)


def batch_sample_iteration(
    data: Dataset, factor: NystromFactor, config: TrainConfig, snapshot_stride: int = 1
) -> Trajectory:
    """Full-gradient projected iteration ``g_{t+1} = g_t - eta_t P(T_x g_t - S_x^* y / n)``.

    Only the step-size schedule and horizon of ``config`` are used. The
    result is what the stochastic iterate equals in expectation over the
    index stream.
    """
    if data.d != factor.landmarks.shape[1]:
        raise InputError("factor landmarks and data have different dimensions")
    Z = factor.R.T @ factor.cross_gram(data.X)
    y = data.y
    coef = np.zeros(factor.rank)
    iters, coefs = [], []
    T = config.iterations
    for t in range(1, T + 1):
        eta = config.step_size(t)
        coef = coef - (eta / data.n) * (Z @ (Z.T @ coef - y))
        if t % snapshot_stride == 0 or t == T:
            iters.append(t)
            coefs.append(coef)
    return Trajectory(factor, iters, np.array(coefs), data.n, data.n)


@dataclass(frozen=True)
class KRRPredictor:
    kernel: KernelSpec
    X: np.ndarray
    alpha: np.ndarray
    lam: float

    def __call__(self, X) -> np.ndarray:
        return gram(self.kernel, X, self.X) @ self.alpha


def krr_solve(data: Dataset, kernel: KernelSpec, lam: float) -> KRRPredictor:
    """Kernel ridge regression, ``alpha = (K + n lam I)^{-1} y`` by Cholesky."""
    if not lam >= 0:
        raise InputError(f"lambda must be non-negative, got {lam}")
    K = gram(kernel, data.X)
    A = K + data.n * lam * np.eye(data.n)
    try:
        cf = scipy.linalg.cho_factor(A, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"KRR system is singular: {exc}") from None
    alpha = scipy.linalg.cho_solve(cf, data.y)
    ynorm = np.linalg.norm(data.y)
    if np.linalg.norm(A @ alpha - data.y) > 1e-8 * max(ynorm, np.finfo(float).tiny):
        raise NumericalError("KRR system too ill-conditioned for the requested lambda")
    return KRRPredictor(kernel, data.X, alpha, float(lam))


def truncate(value, M: float):
    """Clamp to ``[-M, M]``; works on scalars and arrays."""
    if not M > 0:
        raise InputError(f"truncation level must be positive, got {M}")
    out = np.clip(value, -M, M)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class TruncatedPredictor:
    inner: Callable
    M: float

    def __call__(self, X) -> np.ndarray:
        return truncate(_predict(self.inner, X), self.M)


@dataclass(frozen=True)
class CVConfig:
    grid: Sequence[float]
    M: float
    validation: Dataset

    def __post_init__(self):
        if len(self.grid) == 0:
            raise InputError("step-size grid is empty")
        if not self.M > 0:
            raise InputError(f"truncation level must be positive, got {self.M}")


@dataclass
class CVResult:
    eta: float
    model: TruncatedPredictor
    table: list[tuple[float, float]]
    trajectories: dict


def cross_validate_step_size(
    cv: CVConfig, train_data: Dataset, factor: NystromFactor, template: TrainConfig
) -> CVResult:
    """Pick the constant step size whose truncated final iterate has the lowest validation MSE.

    Every candidate is trained on the same index stream. Ties go to the
    smaller step size.
    """
    kappa2 = factor.kernel.kappa**2
    for eta in cv.grid:
        if not 0 < eta <= kappa2:
            raise InputError(f"grid step size {eta} outside (0, kappa^2]")
    J = draw_indices(template, train_data.n)
    table, trajs = [], {}
    for eta in cv.grid:
        cfg = replace(template, eta1=float(eta), theta=0.0)
        traj = train(cfg, train_data, factor, index_stream=J)
        model = TruncatedPredictor(traj.final, cv.M)
        table.append((float(eta), empirical_risk(model, cv.validation)))
        trajs[float(eta)] = traj
    best_eta, _ = min(table, key=lambda row: (row[1], row[0]))
    return CVResult(best_eta, TruncatedPredictor(trajs[best_eta].final, cv.M), table, trajs)


def zero_predictor(X) -> np.ndarray:
    return np.zeros(as_points(X).shape[0])

