"""Nystrom stochastic gradient training in coefficient form.

The iterate is ``f_t(x) = K_{x x~} R b_t`` with ``R R^T = pinv(K_{x~ x~})``.
With ``z_j = R^T K_{x~ x_j}`` one mini-batch step reads

    b_{t+1} = b_t - (eta_t / b) * sum_j z_j (z_j^T b_t - y_j)

which is the projected functional update written in the rank-``r`` basis.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .data import Dataset
from .errors import InputError
from .kernel import KernelSpec, as_points
from .nystrom import NystromFactor, build_factor

STORAGE_STRATEGIES = ("precompute_cross_gram", "on_the_fly")
REGIMES = ("thm1_I", "thm1_II", "cor1_I", "cor1_II", "cor1_III", "cor1_IV")


@dataclass(frozen=True)
class TrainConfig:
    """Step sizes ``eta_t = eta1 * t**-theta``, batch size, horizon and seed.

    ``snapshot_stride=None`` means one snapshot per epoch, ``ceil(n / b)`` steps.
    """

    eta1: float
    iterations: int
    theta: float = 0.0
    batch_size: int = 1
    seed: Optional[int] = 0
    snapshot_stride: Optional[int] = None
    storage: str = "precompute_cross_gram"

    def __post_init__(self):
        if not (self.eta1 >= 0 and math.isfinite(self.eta1)):
            raise InputError(f"eta1 must be a finite non-negative number, got {self.eta1}")
        if not 0 <= self.theta < 1:
            raise InputError(f"theta must lie in [0, 1), got {self.theta}")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise InputError(f"batch_size must be a positive integer, got {self.batch_size}")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise InputError(f"iterations must be a positive integer, got {self.iterations}")
        if self.snapshot_stride is not None and self.snapshot_stride < 1:
            raise InputError(f"snapshot_stride must be positive, got {self.snapshot_stride}")
        if self.storage not in STORAGE_STRATEGIES:
            raise InputError(f"unknown storage strategy {self.storage!r}")

    def step_size(self, t: int) -> float:
        return self.eta1 * float(t) ** (-self.theta)

    def stride(self, n: int) -> int:
        if self.snapshot_stride is not None:
            return int(self.snapshot_stride)
        return max(1, math.ceil(n / self.batch_size))


def check_step_size(eta1: float, kappa: float) -> None:
    """Reject ``eta1 * kappa^2 > 1``; warn above 1/2."""
    scaled = eta1 * kappa**2
    if scaled > 1.0:
        raise InputError(f"eta1 * kappa^2 = {scaled:g} exceeds 1")
    if scaled > 0.5:
        warnings.warn(f"eta1 * kappa^2 = {scaled:g} is above 1/2", RuntimeWarning, stacklevel=3)


@dataclass
class ModelState:
    coef: np.ndarray
    t: int = 1

    @classmethod
    def zero(cls, rank: int) -> "ModelState":
        return cls(np.zeros(rank), 1)


@dataclass(frozen=True)
class Predictor:
    factor: NystromFactor
    coefficients: np.ndarray

    @property
    def kernel(self) -> KernelSpec:
        return self.factor.kernel

    def __call__(self, X) -> np.ndarray:
        X = as_points(X)
        if X.shape[1] != self.factor.landmarks.shape[1]:
            raise InputError(
                f"points have dimension {X.shape[1]}, model expects {self.factor.landmarks.shape[1]}"
            )
        return self.factor.features(X) @ self.coefficients


def predict(p: Predictor, x) -> float:
    """``K_{x x~} R b`` at a single point ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.ndim != 1:
        raise InputError("predict takes a single point")
    return float(p(x[None, :])[0])


class PrecomputedCrossGram:
    """Stores ``K_{x~ x}`` once (memory ``m * n``) and slices columns."""

    def __init__(self, factor: NystromFactor, X):
        self.C = factor.cross_gram(X)

    def __call__(self, idx: np.ndarray) -> np.ndarray:
        return self.C[:, idx]


class OnTheFlyCrossGram:
    """Evaluates the needed kernel columns at each step (memory ``n * d``)."""

    def __init__(self, factor: NystromFactor, X):
        self.factor = factor
        self.X = as_points(X)

    def __call__(self, idx: np.ndarray) -> np.ndarray:
        return self.factor.cross_gram(self.X[idx])


def make_provider(storage: str, factor: NystromFactor, X) -> Callable[[np.ndarray], np.ndarray]:
    if storage == "precompute_cross_gram":
        return PrecomputedCrossGram(factor, X)
    if storage == "on_the_fly":
        return OnTheFlyCrossGram(factor, X)
    raise InputError(f"unknown storage strategy {storage!r}")


def step(
    state: ModelState,
    config: TrainConfig,
    data: Dataset,
    factor: NystromFactor,
    provider: Callable[[np.ndarray], np.ndarray],
    batch_indices,
) -> ModelState:
    batch = np.asarray(batch_indices, dtype=np.intp).reshape(-1)
    if batch.size == 0:
        raise InputError("empty batch")
    if batch.min() < 0 or batch.max() >= data.n:
        raise InputError(f"batch index out of range [0, {data.n})")
    eta = config.step_size(state.t)
    Z = factor.R.T @ provider(batch)
    resid = Z.T @ state.coef - data.y[batch]
    coef = state.coef - (eta / batch.size) * (Z @ resid)
    return ModelState(coef, state.t + 1)


def draw_indices(config: TrainConfig, n: int) -> np.ndarray:
    """The stream ``j_1..j_{bT}``, i.i.d. uniform on ``[0, n)``, shaped ``(T, b)``."""
    rng = np.random.default_rng(config.seed)
    return rng.integers(0, n, size=(config.iterations, config.batch_size))


@dataclass
class Trajectory:
    """Snapshots of the coefficient vector.

    ``iterations[k]`` is the number of steps taken when ``coefs[k]`` was
    recorded, so ``coefs[k]`` represents ``f_{iterations[k] + 1}``.
    """

    factor: NystromFactor
    iterations: list[int]
    coefs: np.ndarray
    n: int
    batch_size: int
    indices: Optional[np.ndarray] = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.iterations)

    def predictor(self, k: int = -1) -> Predictor:
        return Predictor(self.factor, self.coefs[k])

    @property
    def final(self) -> Predictor:
        return self.predictor(-1)

    def predict_all(self, X) -> np.ndarray:
        """Predictions of every snapshot at ``X``, shape ``(len(self), len(X))``."""
        return self.coefs @ self.factor.features(X).T

    def passes(self) -> list[tuple[float, int]]:
        return [pass_count(t, self.batch_size, self.n, self.factor.m) for t in self.iterations]


def train(
    config: TrainConfig,
    data: Dataset,
    factor: NystromFactor,
    index_stream=None,
    keep_indices: bool = False,
) -> Trajectory:
    """Run ``config.iterations`` mini-batch steps from ``b_1 = 0``.

    ``index_stream`` overrides the seeded draw; it must have shape
    ``(iterations, batch_size)``.
    """
    if data.d != factor.landmarks.shape[1]:
        raise InputError("factor landmarks and data have different dimensions")
    check_step_size(config.eta1, factor.kernel.kappa)
    T, b = config.iterations, config.batch_size
    if index_stream is None:
        J = draw_indices(config, data.n)
    else:
        J = np.asarray(index_stream, dtype=np.intp)
        if J.shape != (T, b):
            raise InputError(f"index_stream must have shape {(T, b)}, got {J.shape}")
    provider = make_provider(config.storage, factor, data.X)
    stride = config.stride(data.n)
    state = ModelState.zero(factor.rank)
    iters, coefs = [], []
    for t in range(1, T + 1):
        state = step(state, config, data, factor, provider, J[t - 1])
        if t % stride == 0 or t == T:
            iters.append(t)
            coefs.append(state.coef)
    return Trajectory(factor, iters, np.array(coefs), data.n, b, J if keep_indices else None)


def fit(
    data: Dataset,
    kernel: KernelSpec,
    m: int,
    config: TrainConfig,
    strategy: str = "first_m",
    rtol: Optional[float] = None,
) -> Trajectory:
    """Build the factor on ``m`` landmarks of ``data`` and train."""
    kw = {} if rtol is None else {"rtol": rtol}
    fac = build_factor(kernel, data.X, m, strategy, rng=config.seed, **kw)
    return train(config, data, fac)


def pass_count(t: int, b: int, n: int, m: int) -> tuple[float, int]:
    """``(b t / n, ceil(b t / m))``: epochs over the sample and passes counted per landmark set."""
    return b * t / n, math.ceil(b * t / m)


@dataclass(frozen=True)
class RegimeParams:
    """Declared regularity ``zeta`` (source) and ``gamma`` (capacity) plus a regime.

    The multipliers scale the relations that hold only up to constants; exact
    choices such as ``b = 1`` or ``b = T = ceil(sqrt(n))`` are not scaled.
    """

    regime: str = "thm1_II"
    zeta: float = 0.0
    gamma: float = 1.0
    c_eta: float = 1.0
    c_b: float = 1.0
    c_T: float = 1.0
    c_m: float = 1.0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise InputError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        if not 0 <= self.zeta <= 0.5:
            raise InputError(f"zeta must lie in [0, 1/2], got {self.zeta}")
        if not 0 <= self.gamma <= 1:
            raise InputError(f"gamma must lie in [0, 1], got {self.gamma}")
        for name in ("c_eta", "c_b", "c_T", "c_m"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")


@dataclass(frozen=True)
class Schedule:
    eta: float
    theta: float
    batch_size: int
    iterations: int
    m: int

    def train_config(self, **kw) -> TrainConfig:
        return TrainConfig(
            eta1=self.eta, iterations=self.iterations, theta=self.theta, batch_size=self.batch_size, **kw
        )


def regime_schedule(params: RegimeParams, n: int) -> Schedule:
    """Constant step size, batch size, stopping time and subsampling level for a regime.

    Integers are rounded up; ``m`` is capped at ``n``.
    """
    if n < 3:
        raise InputError(f"regimes need n >= 3, got {n}")
    p = params
    log_n = math.log(n)
    ceil = math.ceil
    if p.regime.startswith("thm1"):
        m = p.c_m * math.sqrt(n) * log_n
        if p.regime == "thm1_I":
            eta = p.c_eta / log_n
            b = T = ceil(math.sqrt(n))
        else:
            eta = p.c_eta / math.sqrt(n)
            b, T = 1, n
    else:
        denom = 2 * p.zeta + p.gamma + 1
        fast = n ** ((2 * p.zeta + 1) / denom)
        base = n ** (1 / denom)
        m = p.c_m * base * log_n
        if p.regime == "cor1_I":
            eta = p.c_eta / fast
            b = 1
            T = ceil(p.c_T * n ** ((2 * p.zeta + 2) / denom))
        elif p.regime == "cor1_II":
            eta = p.c_eta / log_n
            b = ceil(p.c_b * fast)
            T = ceil(p.c_T * base * log_n)
        elif p.regime == "cor1_III":
            eta = p.c_eta / n
            b = 1
            T = ceil(p.c_T * base * n)
        else:
            eta = p.c_eta / math.sqrt(n)
            b = ceil(p.c_b * math.sqrt(n))
            T = ceil(p.c_T * base * math.sqrt(n))
    return Schedule(eta, 0.0, int(b), int(T), int(min(ceil(m), n)))


def with_seed(config: TrainConfig, seed: int) -> TrainConfig:
    return replace(config, seed=seed)
