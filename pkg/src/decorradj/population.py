"""Finite-population ground truth and observed-data containers."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def norm_n(v) -> float:
    """Normalized l2 norm ``sqrt(mean(v**2))``."""
    v = np.asarray(v, dtype=float)
    return float(math.sqrt(np.mean(v * v)))


def inner_n(a, b) -> float:
    return float(np.mean(np.asarray(a, dtype=float) * np.asarray(b, dtype=float)))


@dataclass(frozen=True)
class NormedVector:
    values: np.ndarray
    norm_n: float

    @classmethod
    def of(cls, values):
        values = np.asarray(values, dtype=float)
        return cls(values=values, norm_n=norm_n(values))


def _as_readonly(a, ndim, name):
    a = np.array(a, dtype=float, copy=True)
    if a.ndim == 1 and ndim == 2:
        a = a[:, None]
    if a.ndim != ndim:
        raise DataError(f"{name} must be {ndim}-dimensional")
    if not np.isfinite(a).all():
        raise DataError(f"{name} contains non-finite entries")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FinitePopulation:
    """Covariates and both potential-outcome vectors for ``n`` units.

    ``has_intercept`` only records whether the first column of ``X`` is a
    column of ones; nothing forces one to be present.
    """

    X: np.ndarray
    y1: np.ndarray
    y0: np.ndarray
    has_intercept: bool = False

    def __post_init__(self):
        X = _as_readonly(self.X, 2, "X")
        y1 = _as_readonly(self.y1, 1, "y1")
        y0 = _as_readonly(self.y0, 1, "y0")
        if not (X.shape[0] == y1.shape[0] == y0.shape[0]):
            raise DataError("X, y1 and y0 must have the same number of rows")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y0", y0)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class ResidualSet:
    delta1: np.ndarray
    delta0: np.ndarray

    def __post_init__(self):
        d1 = np.asarray(self.delta1, dtype=float)
        d0 = np.asarray(self.delta0, dtype=float)
        if d1.shape != d0.shape or d1.ndim != 1:
            raise DataError("residual vectors must be 1-d and of equal length")
        if not (np.isfinite(d1).all() and np.isfinite(d0).all()):
            raise DataError("residuals must be finite")
        object.__setattr__(self, "delta1", d1)
        object.__setattr__(self, "delta0", d0)

    @property
    def n(self) -> int:
        return self.delta1.shape[0]


def ate(pop: FinitePopulation) -> float:
    """True average treatment effect of the finite population."""
    return float(np.mean(pop.y1) - np.mean(pop.y0))


def observe(pop: FinitePopulation, T) -> np.ndarray:
    """Observed outcomes ``T * y1 + (1 - T) * y0``; ``T`` may be a stack of rows."""
    T = np.asarray(T)
    if T.ndim not in (1, 2) or T.shape[-1] != pop.n:
        raise DataError(f"assignment has shape {T.shape}, expected (..., {pop.n})")
    return np.where(T == 1, pop.y1, pop.y0)


def residuals(pop: FinitePopulation, f1, f0) -> ResidualSet:
    f1 = np.asarray(f1, dtype=float)
    f0 = np.asarray(f0, dtype=float)
    if f1.shape != (pop.n,) or f0.shape != (pop.n,):
        raise DataError("fitted vectors must have length n")
    return ResidualSet(pop.y1 - f1, pop.y0 - f0)


# ---------------------------------------------------------------- projections


@dataclass(frozen=True)
class FunctionClassSpec:
    """Function class onto which potential outcomes are projected.

    kind:
        ``"linear"``       span of the columns of ``X`` (minimum-norm solution)
        ``"regressogram"`` piecewise constants on ``bins`` equal segments of
                           ``[0, 1]`` in covariate column ``column``
        ``"custom"``       ``projector(y) -> fitted vector``, any user-supplied
                           Euclidean projection
    """

    kind: str
    bins: int | None = None
    column: int = 0
    projector: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)


def min_norm_lstsq(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Minimum-Euclidean-norm least-squares coefficients via the SVD.

    Singular values below ``sigma_max * max(X.shape) * eps`` are treated as
    zero.
    """
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(X.shape[1])
    cutoff = s[0] * max(X.shape) * np.finfo(float).eps
    keep = s > cutoff
    coef = (U[:, keep].T @ y) / s[keep]
    return Vt[keep].T @ coef


def bin_index(x, bins: int) -> np.ndarray:
    """Segment index in ``0..bins-1`` for points of ``[0, 1]``."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise DataError("covariate values must lie in [0, 1]")
    return np.minimum((x * bins).astype(np.int64), bins - 1)


def _project(X, y, cls: FunctionClassSpec) -> np.ndarray:
    if cls.kind == "linear":
        return X @ min_norm_lstsq(X, y)
    if cls.kind == "regressogram":
        if not cls.bins or cls.bins < 1:
            raise ValueError("regressogram class needs a positive bin count")
        b = bin_index(X[:, cls.column], cls.bins)
        sums = np.bincount(b, weights=y, minlength=cls.bins)
        counts = np.bincount(b, minlength=cls.bins)
        means = np.divide(sums, counts, out=np.zeros(cls.bins), where=counts > 0)
        return means[b]
    if cls.kind == "custom":
        if cls.projector is None:
            raise ValueError("custom class needs a projector callable")
        out = np.asarray(cls.projector(y), dtype=float)
        if out.shape != y.shape:
            raise DataError("projector returned a vector of the wrong length")
        return out
    raise ValueError(f"unsupported function class {cls.kind!r}")


def oracle_projection(pop: FinitePopulation, cls: FunctionClassSpec):
    """Euclidean projections ``(f1*, f0*)`` of both potential-outcome vectors.

    Needs both potentials, so it is only meaningful for diagnostics and
    simulations.
    """
    return _project(pop.X, pop.y1, cls), _project(pop.X, pop.y0, cls)


# ----------------------------------------------------------------------- CSV


@dataclass(frozen=True)
class ObservedData:
    X: np.ndarray
    y: np.ndarray
    t: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]


_XCOL = re.compile(r"^x(\d+)$")


def _read_table(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: no data rows")
    try:
        data = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric cell ({exc})") from None
    if data.shape[1] != len(header):
        raise DataError(f"{path}: ragged rows")
    if not np.isfinite(data).all():
        raise DataError(f"{path}: non-finite values")
    return header, data


def _columns(header, data, path):
    xcols = sorted(
        ((int(m.group(1)), j) for j, h in enumerate(header) if (m := _XCOL.match(h))),
    )
    if [k for k, _ in xcols] != list(range(1, len(xcols) + 1)):
        raise DataError(f"{path}: covariate columns must be x1..xd")
    X = data[:, [j for _, j in xcols]] if xcols else np.zeros((data.shape[0], 0))
    named = {h: data[:, j] for j, h in enumerate(header) if not _XCOL.match(h)}
    return X, named


def load_observed_csv(path) -> ObservedData:
    """Read ``x1..xd, y, t`` (``t`` in {0, 1})."""
    header, data = _read_table(path)
    X, named = _columns(header, data, path)
    for col in ("y", "t"):
        if col not in named:
            raise DataError(f"{path}: missing column {col!r}")
    t = named["t"]
    if not np.isin(t, (0.0, 1.0)).all():
        raise DataError(f"{path}: treatment column must be 0/1")
    return ObservedData(X=X, y=named["y"], t=t.astype(np.int8))


def load_potentials_csv(path, has_intercept: bool = False) -> FinitePopulation:
    """Read a ground-truth file with columns ``x1..xd, y1, y0`` (``y``/``t`` ignored)."""
    header, data = _read_table(path)
    X, named = _columns(header, data, path)
    for col in ("y1", "y0"):
        if col not in named:
            raise DataError(f"{path}: missing column {col!r}")
    return FinitePopulation(X=X, y1=named["y1"], y0=named["y0"], has_intercept=has_intercept)


def has_potentials(path) -> bool:
    with open(path, newline="", encoding="utf-8") as fh:
        header = [h.strip() for h in next(csv.reader(fh), [])]
    return "y1" in header and "y0" in header


def write_csv(path, X, columns: dict) -> None:
    """Write covariates as ``x1..xd`` followed by the named columns."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = [f"x{j + 1}" for j in range(X.shape[1])] + list(columns)
    cols = [X[:, j] for j in range(X.shape[1])] + [np.asarray(v) for v in columns.values()]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([format(float(v), ".17g") for v in row])
