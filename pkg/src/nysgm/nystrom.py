"""Landmark selection and the pseudo-inverse factor ``R R^T = pinv(K_mm)``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFactorError, InputError
from .kernel import KernelSpec, as_points, gram

DEFAULT_RTOL = 1e-10
STRATEGIES = ("first_m", "uniform_without_replacement")


def select_landmarks(n: int, m: int, strategy: str = "first_m", rng=None) -> np.ndarray:
    """Indices of ``m`` distinct landmarks among ``n`` training points.

    ``first_m`` takes the first ``m`` points, which is already a uniform draw
    when the sample is i.i.d. ``uniform_without_replacement`` is for data in a
    non-random order; ``rng`` may be a seed or a ``numpy.random.Generator``.
    """
    if strategy not in STRATEGIES:
        raise InputError(f"unknown landmark strategy {strategy!r}")
    if not 1 <= m <= n:
        raise InputError(f"need 1 <= m <= n, got m={m}, n={n}")
    if strategy == "first_m":
        return np.arange(m)
    rng = np.random.default_rng(rng)
    return np.sort(rng.choice(n, size=m, replace=False))


def factor(K_mm, rtol: float = DEFAULT_RTOL) -> tuple[np.ndarray, int]:
    """Return ``(R, r)`` with ``R`` of shape ``(m, r)`` and ``R @ R.T == pinv(K_mm)``.

    Eigenpairs with eigenvalue at most ``rtol * lambda_max`` are discarded, so
    ``r`` is the numerical rank at that cutoff.
    """
    K = np.asarray(K_mm, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] == 0:
        raise InputError(f"K_mm must be a non-empty square matrix, got shape {K.shape}")
    if not rtol > 0:
        raise InputError(f"rtol must be positive, got {rtol}")
    if np.max(np.abs(K - K.T)) > 1e-12:
        raise InputError("K_mm is not symmetric")
    evals, evecs = np.linalg.eigh(K)
    lam_max = evals[-1]
    if not lam_max > 0:
        raise DegenerateFactorError("landmark Gram matrix has rank 0")
    keep = evals > rtol * lam_max
    # eigh sorts ascending; flip so column 0 carries the largest eigenvalue
    w = evals[keep][::-1]
    Q = evecs[:, keep][:, ::-1]
    R = Q / np.sqrt(w)
    return R, int(w.size)


@dataclass(frozen=True)
class NystromFactor:
    kernel: KernelSpec
    landmark_indices: np.ndarray
    landmarks: np.ndarray
    R: np.ndarray
    rtol: float = DEFAULT_RTOL

    @property
    def m(self) -> int:
        return self.landmarks.shape[0]

    @property
    def rank(self) -> int:
        return self.R.shape[1]

    def cross_gram(self, X) -> np.ndarray:
        """``K_{x~ x}``: landmarks by points, shape ``(m, len(X))``."""
        return gram(self.kernel, self.landmarks, X)

    def features(self, X) -> np.ndarray:
        """Rows ``K_{x x~} R``, so that ``f(x) = features(x) @ coef``."""
        return gram(self.kernel, X, self.landmarks) @ self.R


def build_factor(
    kernel: KernelSpec,
    X,
    m: int,
    strategy: str = "first_m",
    rng=None,
    rtol: float = DEFAULT_RTOL,
) -> NystromFactor:
    X = as_points(X)
    idx = select_landmarks(X.shape[0], m, strategy, rng)
    landmarks = X[idx]
    R, _ = factor(gram(kernel, landmarks), rtol)
    return NystromFactor(kernel, idx, landmarks, R, rtol)
