"""Reproducing kernels and Gram matrices.

Points are handled as 2-D float64 arrays of shape ``(count, d)``. A 1-D
array passed where a point *set* is expected is read as ``count`` points in
one dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

FAMILIES = ("gaussian", "linear", "polynomial")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family, its parameters, and the bound ``kappa`` on ``sqrt(K(x, x))``.

    For the Gaussian kernel ``kappa`` is always 1. For the linear and polynomial
    kernels the bound depends on the input domain, so it is declared by the
    caller and defaults to 1 (inputs in the unit ball, offset 0).
    """

    family: str = "gaussian"
    sigma: float = 1.0
    degree: int = 2
    offset: float = 0.0
    kappa: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "gaussian":
            if not self.sigma > 0:
                raise InputError(f"gaussian bandwidth must be positive, got {self.sigma}")
            if self.kappa != 1.0:
                raise InputError("gaussian kernel has kappa = 1")
        if self.family == "polynomial" and (int(self.degree) != self.degree or self.degree < 1):
            raise InputError(f"polynomial degree must be an integer >= 1, got {self.degree}")
        if not self.kappa >= 1.0:
            raise InputError(f"kappa must be >= 1, got {self.kappa}")

    @classmethod
    def gaussian(cls, sigma: float) -> "KernelSpec":
        return cls(family="gaussian", sigma=float(sigma))


def as_points(X) -> np.ndarray:
    """Coerce a point set to a float64 array of shape ``(count, d)``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X.reshape(-1, 1)
    elif X.ndim != 2:
        raise InputError(f"point set must be 1-D or 2-D, got shape {X.shape}")
    return X


def _pairwise(spec: KernelSpec, X: np.ndarray, Xp: np.ndarray) -> np.ndarray:
    # Elementwise forms keep gram(X, X) exactly symmetric: (a - b)**2 == (b - a)**2
    # and a*b == b*a bit for bit, and the sum over d runs in the same order.
    if spec.family == "gaussian":
        diff = X[:, None, :] - Xp[None, :, :]
        sq = np.sum(diff * diff, axis=-1)
        return np.exp(-sq / (2.0 * spec.sigma**2))
    inner = np.sum(X[:, None, :] * Xp[None, :, :], axis=-1)
    if spec.family == "linear":
        return inner
    return (inner + spec.offset) ** int(spec.degree)


def gram(spec: KernelSpec, X, Xp=None) -> np.ndarray:
    """Kernel matrix ``[K(x, x')]`` for ``x`` in ``X`` and ``x'`` in ``Xp``."""
    X = as_points(X)
    Xp = X if Xp is None else as_points(Xp)
    if X.shape[0] == 0 or Xp.shape[0] == 0:
        raise InputError("gram needs non-empty point sets")
    if X.shape[1] != Xp.shape[1]:
        raise InputError(f"dimension mismatch: {X.shape[1]} vs {Xp.shape[1]}")
    return _pairwise(spec, X, Xp)


def eval_kernel(spec: KernelSpec, x, xp) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    xp = np.atleast_1d(np.asarray(xp, dtype=np.float64))
    if x.ndim != 1 or xp.ndim != 1:
        raise InputError("eval_kernel takes single points")
    if x.shape != xp.shape:
        raise InputError(f"dimension mismatch: {x.shape[0]} vs {xp.shape[0]}")
    return float(_pairwise(spec, x[None, :], xp[None, :])[0, 0])
