"""Datasets: the toy regression problem, evaluation measures and CSV I/O.

All random draws go through ``numpy.random.default_rng`` (PCG64 seeded via
SeedSequence), so a given integer seed yields the same sample on every
platform and numpy release that keeps the PCG64 stream stable.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import CSVParseError, InputError
from .kernel import as_points


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    f_true: Optional[np.ndarray] = None
    seed: Optional[int] = None

    def __post_init__(self):
        self.X = as_points(self.X)
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        n = self.X.shape[0]
        if n < 1:
            raise InputError("dataset must contain at least one point")
        if self.y.shape[0] != n:
            raise InputError(f"X has {n} rows but y has {self.y.shape[0]} entries")
        if not np.all(np.isfinite(self.y)):
            raise InputError("y contains non-finite values")
        if self.f_true is not None:
            self.f_true = np.asarray(self.f_true, dtype=np.float64).reshape(-1)
            if self.f_true.shape[0] != n:
                raise InputError("f_true must have one entry per point")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        f = None if self.f_true is None else self.f_true[idx]
        return Dataset(self.X[idx], self.y[idx], f, self.seed)


def f_rho(x):
    """Toy regression function ``|x - 1/2| - 1/2`` on ``[0, 1]``."""
    x = np.asarray(x, dtype=np.float64)
    return np.abs(x - 0.5) - 0.5


def gen_toy(n: int, seed=None, noise_std: float = 1.0) -> Dataset:
    """``n`` pairs with ``x ~ U[0, 1]`` and ``y = f_rho(x) + N(0, noise_std^2)``."""
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=n)
    noise = rng.standard_normal(n)
    f = f_rho(x)
    return Dataset(x.reshape(-1, 1), f + noise_std * noise, f, seed)


def eval_grid(count: int, mode: str = "grid", seed=None) -> tuple[np.ndarray, np.ndarray]:
    """Evaluation points on ``[0, 1]`` paired with ``f_rho`` values.

    ``grid`` gives the cell midpoints ``(i + 1/2) / count``; ``random`` draws
    ``count`` uniform points from ``seed``.
    """
    if count < 1:
        raise InputError(f"count must be >= 1, got {count}")
    if mode == "grid":
        x = (np.arange(count) + 0.5) / count
    elif mode == "random":
        x = np.random.default_rng(seed).uniform(0.0, 1.0, size=count)
    else:
        raise InputError(f"unknown eval mode {mode!r}")
    return x.reshape(-1, 1), f_rho(x)


def save_csv(data: Dataset, path) -> None:
    header = [f"x{j}" for j in range(data.d)] + ["y"]
    if data.f_true is not None:
        header.append("ftrue")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(data.n):
            row = [repr(float(v)) for v in data.X[i]] + [repr(float(data.y[i]))]
            if data.f_true is not None:
                row.append(repr(float(data.f_true[i])))
            writer.writerow(row)


def _parse_header(header, path) -> tuple[list[int], int, Optional[int]]:
    names = [h.strip() for h in header]
    if "y" not in names:
        raise CSVParseError(path, 1, "missing 'y' column")
    feature_cols = {}
    ftrue = None
    for col, name in enumerate(names):
        if name == "y":
            continue
        if name == "ftrue":
            ftrue = col
        elif name.startswith("x") and name[1:].isdigit():
            feature_cols[int(name[1:])] = col
        else:
            raise CSVParseError(path, 1, f"unexpected column {name!r}")
    if len(set(names)) != len(names):
        raise CSVParseError(path, 1, "duplicate column names")
    d = len(feature_cols)
    if d == 0 or sorted(feature_cols) != list(range(d)):
        raise CSVParseError(path, 1, "feature columns must be x0..x{d-1}")
    return [feature_cols[j] for j in range(d)], names.index("y"), ftrue


def load_csv(path) -> Dataset:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CSVParseError(path, 1, "empty file") from None
        xcols, ycol, fcol = _parse_header(header, path)
        width = len(header)
        X, y, f = [], [], []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != width:
                raise CSVParseError(path, line, f"expected {width} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise CSVParseError(path, line, f"non-numeric cell ({exc})") from None
            if not all(math.isfinite(v) for v in vals):
                raise CSVParseError(path, line, "non-finite value")
            X.append([vals[c] for c in xcols])
            y.append(vals[ycol])
            if fcol is not None:
                f.append(vals[fcol])
    if not y:
        raise CSVParseError(path, 2, "no data rows")
    return Dataset(
        np.array(X, dtype=np.float64),
        np.array(y, dtype=np.float64),
        np.array(f, dtype=np.float64) if fcol is not None else None,
    )
