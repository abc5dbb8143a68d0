"""Regression backends: fit on a subset of units, predict at every unit.

Every backend returns a :class:`FittedFunction` carrying the boolean mask
of the units it was trained on, so estimators can check that a fit only
saw the units it was allowed to see.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .population import bin_index, min_norm_lstsq

BACKENDS = ("ols", "lasso", "regressogram", "regressogram_interp", "zero")


class DegenerateSubsetError(ValueError):
    """The training subset is empty."""


class LassoConvergenceError(RuntimeError):
    def __init__(self, message, objective):
        super().__init__(f"{message} (last objective {objective:.17g})")
        self.objective = objective


@dataclass(frozen=True)
class TrainingSubset:
    """Units used for fitting, plus the probability each unit had of being used."""

    mask: np.ndarray
    inclusion_prob: float

    def __post_init__(self):
        mask = np.asarray(self.mask).astype(bool)
        if mask.ndim != 1:
            raise ValueError("subset mask must be a vector")
        if not (0.0 < self.inclusion_prob < 1.0):
            raise ValueError("inclusion_prob must lie in (0, 1)")
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_indices(cls, indices, n, inclusion_prob):
        mask = np.zeros(n, dtype=bool)
        mask[np.asarray(list(indices), dtype=np.int64)] = True
        return cls(mask, inclusion_prob)

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    @property
    def n(self) -> int:
        return self.mask.shape[0]

    @property
    def expected_size(self) -> float:
        return self.inclusion_prob * self.n


@dataclass(frozen=True)
class FittedFunction:
    predictions: np.ndarray
    train_error: float
    backend_tag: str
    train_mask: np.ndarray | None = None
    coef: np.ndarray | None = None
    objective: float | None = None
    history: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        p = np.asarray(self.predictions, dtype=float)
        if not np.isfinite(p).all():
            raise ValueError("predictions must be finite")
        if self.train_error < 0:
            raise ValueError("train_error must be nonnegative")
        object.__setattr__(self, "predictions", p)

    @classmethod
    def fixed(cls, values, tag="fixed"):
        """Wrap a vector that does not depend on any observed outcome."""
        return cls(np.asarray(values, dtype=float), 0.0, tag, None)


def _train_error(pred, y, mask) -> float:
    if not mask.any():
        return 0.0
    r = pred[mask] - y[mask]
    return float(math.sqrt(np.mean(r * r)))


def _check_subset(y, subset):
    y = np.asarray(y, dtype=float)
    if subset.n != y.shape[0]:
        raise ValueError("subset mask and outcome vector lengths differ")
    if subset.size == 0:
        raise DegenerateSubsetError("training subset is empty")
    return y


# ------------------------------------------------------------------------ OLS


def fit_ols_minnorm(X, y, subset: TrainingSubset) -> FittedFunction:
    """Least squares on the subset; minimum-norm solution when rank deficient.

    Outcomes outside the subset are never read.
    """
    y = _check_subset(y, subset)
    X = np.asarray(X, dtype=float)
    m = subset.mask
    beta = min_norm_lstsq(X[m], y[m])
    pred = X @ beta
    return FittedFunction(pred, _train_error(pred, y, m), "ols", m.copy(), coef=beta)


# ---------------------------------------------------------------------- Lasso


@dataclass(frozen=True)
class LassoSpec:
    """Penalty weight and the bounds used by the side constraint."""

    lambda_n: float
    y_inf: float
    x_inf: float = math.inf

    def __post_init__(self):
        if not self.lambda_n >= 0:
            raise ValueError("lambda_n must be nonnegative")
        if not self.y_inf > 0:
            raise ValueError("y_inf must be positive")

    def check_design(self, X):
        if math.isfinite(self.x_inf) and np.max(np.abs(X)) > self.x_inf:
            raise ValueError("x_inf is smaller than the largest absolute covariate")


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso_objective(beta, Xs, ys, n_fit, lam) -> float:
    r = ys - Xs @ beta
    return float(r @ r / (2.0 * n_fit) + lam * np.abs(beta).sum())


def lasso_kkt_residual(beta, Xs, ys, n_fit, lam) -> float:
    """Sup-norm violation of the subgradient optimality conditions."""
    g = -(Xs.T @ (ys - Xs @ beta)) / n_fit
    nz = beta != 0
    v = np.where(nz, np.abs(g + lam * np.sign(beta)), np.maximum(np.abs(g) - lam, 0.0))
    return float(v.max()) if v.size else 0.0


def _make_feasible(beta, X, y_inf):
    """Scale ``beta`` so that ``max |X beta| <= y_inf`` holds in floating point."""
    peak = np.max(np.abs(X @ beta)) if beta.size else 0.0
    if peak <= y_inf:
        return beta
    t = y_inf / peak
    while True:
        cand = beta * t
        if np.max(np.abs(X @ cand)) <= y_inf:
            return cand
        t *= 1.0 - 4 * np.finfo(float).eps


def _cd_unconstrained(Xs, ys, n_fit, lam, beta, tol, max_sweeps):
    col_sq = (Xs * Xs).sum(axis=0) / n_fit
    r = ys - Xs @ beta
    for sweep in range(max_sweeps):
        max_step = 0.0
        for j in range(beta.size):
            cj = col_sq[j]
            if cj == 0.0:
                if beta[j] != 0.0:
                    beta[j] = 0.0
                continue
            xj = Xs[:, j]
            old = beta[j]
            rho = xj @ r / n_fit + cj * old
            new = soft_threshold(rho, lam) / cj
            if new != old:
                r -= xj * (new - old)
                beta[j] = new
                max_step = max(max_step, abs(new - old) * math.sqrt(cj))
        if max_step < tol * 1e-2 and lasso_kkt_residual(beta, Xs, ys, n_fit, lam) <= tol:
            return beta, sweep + 1
    return beta, None


def _coordinate_interval(a, u_rest, y_inf):
    """Values ``b`` with ``|u_rest + a * b| <= y_inf`` for all rows."""
    nz = a != 0
    if not nz.any():
        return -math.inf, math.inf
    a = a[nz]
    u = u_rest[nz]
    lo_b = (-y_inf - u) / a
    hi_b = (y_inf - u) / a
    lo = np.where(a > 0, lo_b, hi_b)
    hi = np.where(a > 0, hi_b, lo_b)
    return float(lo.max()), float(hi.min())


def _cd_gram(G, c, lam, beta, tol, max_sweeps):
    """Coordinate descent for ``0.5 b'Gb - c'b + lam ||b||_1``."""
    diag = np.diag(G).copy()
    grad = G @ beta - c
    for _ in range(max_sweeps):
        max_step = 0.0
        for j in range(beta.size):
            if diag[j] <= 0.0:
                continue
            old = beta[j]
            new = soft_threshold(diag[j] * old - grad[j], lam) / diag[j]
            if new != old:
                grad += G[:, j] * (new - old)
                beta[j] = new
                max_step = max(max_step, abs(new - old) * math.sqrt(diag[j]))
        if max_step < tol:
            break
    return beta


def _admm_constrained(X, Xs, ys, n_fit, lam, y_inf, beta, tol, max_iter):
    """Augmented-Lagrangian splitting with ``z = X b`` confined to the box."""
    n = X.shape[0]
    G0 = Xs.T @ Xs / n_fit
    c0 = Xs.T @ ys / n_fit
    XtX = X.T @ X
    rho = 1.0 / n
    z = np.clip(X @ beta, -y_inf, y_inf)
    u = np.zeros(n)
    scale = max(y_inf, 1.0)
    for _ in range(max_iter):
        G = G0 + rho * XtX
        beta = _cd_gram(G, c0 + rho * (X.T @ (z - u)), lam, beta, tol * 1e-2, 10_000)
        xb = X @ beta
        z_old = z
        z = np.clip(xb + u, -y_inf, y_inf)
        u += xb - z
        primal = np.max(np.abs(xb - z))
        dual = rho * np.max(np.abs(X.T @ (z - z_old)))
        if primal <= tol * scale and dual <= tol:
            return beta, True
        if primal > 10 * dual:
            rho *= 2.0
            u /= 2.0
        elif dual > 10 * primal:
            rho /= 2.0
            u *= 2.0
    return beta, False


def _cd_feasible(X, Xs, ys, n_fit, lam, y_inf, beta, tol, max_sweeps, history):
    """Coordinate descent confined to the feasible polytope.

    Each coordinate move is the exact minimizer over the segment of the
    coordinate line that stays feasible, so the objective never increases
    and every iterate satisfies the side constraint.
    """
    col_sq = (Xs * Xs).sum(axis=0) / n_fit
    r = ys - Xs @ beta
    u = X @ beta
    for sweep in range(max_sweeps):
        max_step = 0.0
        for j in range(beta.size):
            cj = col_sq[j]
            a = X[:, j]
            old = beta[j]
            lo, hi = _coordinate_interval(a, u - a * old, y_inf)
            lo, hi = min(lo, old), max(hi, old)
            if cj == 0.0:
                new = min(max(0.0, lo), hi)
            else:
                rho = Xs[:, j] @ r / n_fit + cj * old
                new = min(max(soft_threshold(rho, lam) / cj, lo), hi)
            if new != old:
                delta = new - old
                r -= Xs[:, j] * delta
                u += a * delta
                beta[j] = new
                max_step = max(max_step, abs(delta) * math.sqrt(max(cj, 1e-300)))
        history.append(lasso_objective(beta, Xs, ys, n_fit, lam))
        if max_step < tol:
            return beta, sweep + 1
    return beta, None


def fit_lasso_constrained(
    X,
    y,
    subset: TrainingSubset,
    spec: LassoSpec,
    *,
    tol: float = 1e-7,
    max_sweeps: int = 100_000,
    max_admm: int = 5_000,
    beta0=None,
) -> FittedFunction:
    """Side-constrained Lasso.

    Minimizes ``(2 n_R)^-1 sum_{i in subset} (<x_i, b> - y_i)^2 + lambda ||b||_1``
    subject to ``max_i |<x_i, b>| <= y_inf`` over all ``n`` rows of ``X``,
    with ``n_R = inclusion_prob * n``.

    Cyclic coordinate descent solves the unconstrained problem first. If
    that solution breaks the side constraint, the constrained program is
    solved by an augmented-Lagrangian splitting whose subproblems are again
    solved by coordinate descent; the result is scaled onto the feasible
    set and polished by feasibility-preserving coordinate descent. The
    returned objective never exceeds that of the scaled-back unconstrained
    solution. ``history`` records the objective over the feasible sweeps.
    """
    y = _check_subset(y, subset)
    X = np.asarray(X, dtype=float)
    spec.check_design(X)
    m = subset.mask
    Xs, ys = X[m], y[m]
    n_fit = subset.expected_size
    lam = spec.lambda_n
    y_inf = spec.y_inf
    beta = np.zeros(X.shape[1]) if beta0 is None else np.array(beta0, dtype=float)

    def obj(b):
        return lasso_objective(b, Xs, ys, n_fit, lam)

    history = [obj(beta)]
    beta, sweeps = _cd_unconstrained(Xs, ys, n_fit, lam, beta, tol, max_sweeps)
    if sweeps is None:
        raise LassoConvergenceError("coordinate descent did not converge", obj(beta))
    history.append(obj(beta))
    if np.max(np.abs(X @ beta)) > y_inf:
        scaled = _make_feasible(beta.copy(), X, y_inf)
        cand, ok = _admm_constrained(X, Xs, ys, n_fit, lam, y_inf, scaled.copy(), tol, max_admm)
        if not ok:
            raise LassoConvergenceError("constrained solver did not converge", obj(cand))
        cand = _make_feasible(cand, X, y_inf)
        if obj(cand) > obj(scaled):
            cand = scaled
        history = [obj(cand)]
        beta, sweeps = _cd_feasible(X, Xs, ys, n_fit, lam, y_inf, cand, tol, max_sweeps, history)
        if sweeps is None:
            raise LassoConvergenceError("feasible polish did not converge", history[-1])
        beta = _make_feasible(beta, X, y_inf)
    pred = X @ beta
    return FittedFunction(
        pred, _train_error(pred, y, m), "lasso", m.copy(), coef=beta, objective=obj(beta),
        history=history,
    )


def default_lambda(
    X, y, subset: TrainingSubset, y_inf: float, x_inf: float | None = None,
    delta: float = 0.05, ridge: float = 1e-3,
) -> float:
    """Penalty level mimicking the usual Lasso lower bound.

    The residual correlation term uses a pilot ridge fit on the subset in
    place of the population least-squares coefficients, which are not
    observable.
    """
    y = _check_subset(y, subset)
    X = np.asarray(X, dtype=float)
    m = subset.mask
    Xs, ys = X[m], y[m]
    n_fit = subset.expected_size
    d = X.shape[1]
    gram = Xs.T @ Xs / n_fit + ridge * np.eye(d)
    b0 = np.linalg.solve(gram, Xs.T @ ys / n_fit)
    corr = 2.0 / n_fit * np.max(np.abs(Xs.T @ (ys - Xs @ b0)))
    if x_inf is None:
        x_inf = float(np.max(np.abs(X)))
    noise = 16.0 * x_inf * y_inf * math.sqrt(math.log(d / delta) / n_fit)
    return float(corr + noise)


# --------------------------------------------------------------- regressogram


def safe_ceil(v: float) -> int:
    """Ceiling that ignores floating noise just above an integer."""
    r = round(v)
    if abs(v - r) < 1e-9 * max(1.0, abs(v)):
        return int(r)
    return int(math.ceil(v))


def regressogram_bins(n: int, alpha: float) -> int:
    return safe_ceil(n ** (1.0 / (1.0 + 2.0 * alpha)))


def regressogram_shrinkage(n: int, alpha: float) -> float:
    return 1.0 - n ** (-alpha / (2.0 * alpha + 1.0))


def fit_regressogram(x, y, subset: TrainingSubset, alpha: float) -> FittedFunction:
    """Shrunk bin averages over ``ceil(n^(1/(1+2 alpha)))`` equal segments of [0, 1].

    A segment holding no training point predicts the (shrunk) mean of the
    whole training subset.
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError("alpha must lie in (0, 1]")
    y = _check_subset(y, subset)
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[:, 0]
    n = x.shape[0]
    B = regressogram_bins(n, alpha)
    shrink = regressogram_shrinkage(n, alpha)
    m = subset.mask
    b = bin_index(x, B)
    sums = np.bincount(b[m], weights=y[m], minlength=B)
    counts = np.bincount(b[m], minlength=B)
    fallback = y[m].mean()
    means = np.where(counts > 0, sums / np.maximum(counts, 1), fallback)
    pred = shrink * means[b]
    return FittedFunction(pred, _train_error(pred, y, m), "regressogram", m.copy())


def interpolate_wrap(base: FittedFunction, y, subset: TrainingSubset) -> FittedFunction:
    """Reproduce the training outcomes exactly, defer to ``base`` elsewhere."""
    y = np.asarray(y, dtype=float)
    m = subset.mask
    if y.shape != base.predictions.shape or m.shape != y.shape:
        raise ValueError("lengths of base predictions, outcomes and subset differ")
    pred = np.where(m, y, base.predictions)
    mask = m.copy() if base.train_mask is None else (m | base.train_mask)
    return FittedFunction(pred, 0.0, base.backend_tag + "_interp", mask)


def fit_zero(n: int) -> FittedFunction:
    return FittedFunction(np.zeros(n), 0.0, "zero", None)


# ------------------------------------------------------------------- dispatch


def fit_backend(backend: str, X, y, subset: TrainingSubset, **opts) -> FittedFunction:
    """Fit by backend name: ``ols | lasso | regressogram | regressogram_interp | zero``."""
    if backend == "zero":
        return fit_zero(subset.n)
    if backend == "ols":
        return fit_ols_minnorm(X, y, subset)
    if backend == "lasso":
        y_inf = opts.get("y_inf")
        if y_inf is None:
            y_inf = float(np.max(np.abs(np.asarray(y)[subset.mask])))
        if y_inf == 0.0:
            # the side constraint pins every prediction to zero
            return FittedFunction(np.zeros(subset.n), 0.0, "lasso", subset.mask.copy(),
                                  coef=np.zeros(np.asarray(X).shape[1]), objective=0.0)
        lam = opts.get("lambda")
        if lam is None:
            lam = default_lambda(X, y, subset, y_inf)
        return fit_lasso_constrained(X, y, subset, LassoSpec(lam, y_inf))
    if backend in ("regressogram", "regressogram_interp"):
        alpha = opts.get("alpha")
        if alpha is None:
            raise ValueError("regressogram backends need alpha")
        x = np.asarray(X, dtype=float)
        x = x[:, opts.get("column", 0)] if x.ndim == 2 else x
        base = fit_regressogram(x, y, subset, alpha)
        if backend == "regressogram_interp":
            return interpolate_wrap(base, y, subset)
        return base
    raise ValueError(f"unknown backend {backend!r}")
