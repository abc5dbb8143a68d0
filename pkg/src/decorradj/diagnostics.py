"""Theory-side quantities: leverage, residual uniformity, error bounds,
the critical radius of a function class and a restricted-eigenvalue probe.

All bounds set their unspecified universal constants to 1, so only their
scaling in the inputs is meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .decorrelation import DecorrelationProbs
from .population import ResidualSet, norm_n

ErrorFn = Callable[[float, float], float]


class NoRootError(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class BoundInputs:
    """Error functions ``(pi, delta) -> eps`` for both arms, plus ``delta`` and the probabilities."""

    eps1: ErrorFn
    eps0: ErrorFn
    delta: float
    probs: DecorrelationProbs

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")


@dataclass(frozen=True)
class EntropySpec:
    """Metric entropy ``log N(t)`` of a function class.

    ``polynomial``: ``c * t**(-alpha)``. ``tabulated``: values ``log_n`` at
    increasing radii ``t_grid``, interpolated linearly in log-log space and
    held constant outside the grid.
    """

    form: str
    alpha: float = 1.0
    c: float = 1.0
    t_grid: tuple = field(default=())
    log_n: tuple = field(default=())

    def __post_init__(self):
        if self.form == "polynomial":
            if not (self.alpha > 0 and self.c >= 0):
                raise ValueError("polynomial entropy needs alpha > 0 and c >= 0")
        elif self.form == "tabulated":
            t = np.asarray(self.t_grid, dtype=float)
            v = np.asarray(self.log_n, dtype=float)
            if t.ndim != 1 or t.shape != v.shape or t.size < 2:
                raise ValueError("tabulated entropy needs matching grids of length >= 2")
            if np.any(t <= 0) or np.any(np.diff(t) <= 0) or np.any(v < 0):
                raise ValueError("t_grid must be positive increasing and log_n nonnegative")
        else:
            raise ValueError(f"unknown entropy form {self.form!r}")

    def log_covering(self, t: float) -> float:
        if self.form == "polynomial":
            return self.c * t ** (-self.alpha)
        t_grid = np.asarray(self.t_grid)
        v = np.maximum(np.asarray(self.log_n), 1e-300)
        return float(np.exp(np.interp(math.log(t), np.log(t_grid), np.log(v))))

    def integral(self, lo: float, hi: float) -> float:
        """``int_lo^hi sqrt(log N(t)) dt`` (zero when ``lo >= hi``)."""
        if hi <= lo:
            return 0.0
        if self.form == "polynomial":
            if self.c == 0:
                return 0.0
            k = 1.0 - self.alpha / 2.0
            sc = math.sqrt(self.c)
            if abs(k) < 1e-12:
                return sc * math.log(hi / lo)
            if lo == 0.0:
                if k <= 0:
                    return math.inf
                return sc * hi**k / k
            return sc * (hi**k - lo**k) / k
        # substitute t = exp(s) to tame the growth near zero
        val, _ = integrate.quad(
            lambda s: math.sqrt(self.log_covering(math.exp(s))) * math.exp(s),
            math.log(max(lo, 1e-300)),
            math.log(hi),
            epsabs=1e-11,
            epsrel=1e-9,
            limit=200,
        )
        return val


# ------------------------------------------------------------ design summaries


def max_leverage(X) -> float:
    """``kappa_n^2 = max_i ||x_i||_2^2 / n``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.size == 0:
        raise ValueError("X must be a non-empty matrix")
    return float(np.max(np.sum(X * X, axis=1)) / X.shape[0])


def residual_uniformity(resid: ResidualSet) -> float:
    """``mu_n = Delta_inf^2 / (n * Delta_2^2)``, in ``[1/n, 1]``."""
    d_inf = max(np.max(np.abs(resid.delta1)), np.max(np.abs(resid.delta0)))
    d_2 = max(norm_n(resid.delta1), norm_n(resid.delta0))
    if d_2 == 0.0:
        raise ValueError("residual uniformity is undefined for all-zero residuals")
    mu = d_inf**2 / (resid.n * d_2**2)
    return float(min(max(mu, 1.0 / resid.n), 1.0))


# ---------------------------------------------------------------------- bounds


def theorem1_bound(inputs: BoundInputs) -> float:
    """High-probability bound on ``sqrt(n) |dc - dc_oracle|``."""
    p, dl = inputs.probs, inputs.delta
    err = inputs.eps1(p.pi_R, dl / 4) / p.pi_M + inputs.eps0(p.pi_Rbar, dl / 4) / p.pi_Mbar
    return float(err * math.sqrt(math.log(4 / dl)))


def ols_bound(kappa2: float, delta2bar: float, d: int, pi_R: float, delta: float) -> float:
    """``sqrt(kappa2 * delta2bar^2 * log d / pi_R) * log(1/delta)``; ``delta2bar`` is ``max_t ||Delta(t)||_n``."""
    if d < 2:
        raise ValueError("the OLS bound needs d >= 2")
    return float(math.sqrt(kappa2 * delta2bar**2 * math.log(d) / pi_R) * math.log(1 / delta))


def lasso_bound(x_inf, y_inf, k, d, gamma, n, pi_R, lambda_n, delta) -> float:
    if gamma <= 0:
        raise ValueError("the RE constant must be positive")
    first = x_inf * y_inf / pi_R * math.sqrt(k * math.log(d / delta) / (gamma * n))
    return float((first + lambda_n * math.sqrt(k / gamma)) * math.sqrt(math.log(1 / delta)))


def final_gap_bound(resid: ResidualSet, probs: DecorrelationProbs, eps1: ErrorFn, eps0: ErrorFn, delta: float) -> float:
    """Bound on the excess error of dc over the classical oracle."""
    return float(
        norm_n(resid.delta1) * math.sqrt(probs.pi_R)
        + eps1(probs.pi_R, delta)
        + norm_n(resid.delta0) * math.sqrt(probs.pi_Rbar)
        + eps0(probs.pi_Rbar, delta)
    )


def best_fit_prob(gap: Callable[[float], float], lo: float, hi: float, grid: int = 2001) -> float:
    """Grid minimizer of ``gap(pi)`` over ``[lo, hi]`` (log-spaced)."""
    pis = np.geomspace(lo, hi, grid)
    vals = np.array([gap(p) for p in pis])
    return float(pis[int(np.argmin(vals))])


# ------------------------------------------------------------- critical radius


_INV_PHI = (math.sqrt(5) - 1) / 2


def _golden_min(f, a, b, tol=1e-12, max_iter=200):
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    x = (a + b) / 2
    best = min(((f(a), a), (f(b), b), (f(x), x)))
    return best[1], best[0]


def critical_rhs(r: float, entropy: EntropySpec, n: int, pi_R: float, delta: float) -> float:
    """Right-hand side of the localized fixed-point equation at radius ``r``."""
    root_n = math.sqrt(n)
    slack = r * math.sqrt(math.log(1 / delta) / n)

    def inner(g):
        return g + entropy.integral(g / 4, 2 * r) / root_n

    _, val = _golden_min(inner, 0.0, 8 * r)
    return 64.0 / pi_R * (val + slack)


@dataclass(frozen=True)
class CriticalRadius:
    r: float
    bracket: tuple
    residual: float


def critical_radius(
    entropy: EntropySpec, n: int, pi_R: float, delta: float,
    r_lo: float = 1e-12, r_hi: float = 1e3, rel_tol: float = 1e-12,
) -> CriticalRadius:
    """Largest root of ``r^2 = rhs(r)`` inside ``[r_lo, r_hi]``.

    A log-spaced scan from ``r_hi`` downward locates the last sign change of
    ``rhs(r) - r^2``, which bisection then refines.
    """
    if not (0 < pi_R < 1) or not (0 < delta < 1) or n < 1:
        raise ValueError("need n >= 1, pi_R in (0, 1), delta in (0, 1)")

    def phi(r):
        return critical_rhs(r, entropy, n, pi_R, delta) - r * r

    grid = np.geomspace(r_hi, r_lo, 241)
    trace = []
    prev_r, prev_v = grid[0], phi(grid[0])
    trace.append((prev_r, prev_v))
    if prev_v > 0:
        raise NoRootError("rhs exceeds r^2 at the top of the bracket", trace)
    for r in grid[1:]:
        v = phi(r)
        trace.append((r, v))
        if v > 0:
            lo, hi = r, prev_r
            break
        prev_r, prev_v = r, v
    else:
        raise NoRootError("no sign change of rhs - r^2 in the bracket", trace)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if phi(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rel_tol * hi:
            break
    r = 0.5 * (lo + hi)
    return CriticalRadius(r=r, bracket=(r_lo, r_hi), residual=abs(phi(r)))


def fit_exponent(xs, ys) -> float:
    """Least-squares slope of ``log ys`` against ``log xs``."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


# ---------------------------------------------------------------- RE probe


def _cone_direction(rng, support, off, d):
    theta = np.zeros(d)
    theta[support] = rng.standard_normal(support.size)
    l1 = np.abs(theta[support]).sum()
    if off.size:
        u = rng.random()
        mass = 3.0 * l1 * (1.0 if u < 0.3 else u)
        if rng.random() < 0.3:
            alloc = np.zeros(off.size)
            alloc[rng.integers(off.size)] = 1.0
        else:
            alloc = rng.dirichlet(np.ones(off.size) * rng.choice([0.2, 1.0, 5.0]))
        theta[off] = mass * alloc * rng.choice([-1.0, 1.0], size=off.size)
    return theta


def _in_cone(theta, support, off):
    return np.abs(theta[off]).sum() <= 3.0 * np.abs(theta[support]).sum() * (1 + 1e-12)


def re_constant_probe(X, support, trials: int, rng: np.random.Generator, refine_steps: int = 200) -> float:
    """Sampled upper bound on the restricted-eigenvalue constant over ``C_3(support)``.

    Minimizes ``||X theta||_n^2`` over random unit directions in the cone,
    then hill-climbs from the best one with cone-feasible perturbations.
    Every candidate lies in the cone, so the value can only overestimate
    the true constant.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if d > 12:
        raise ValueError("the probe is limited to d <= 12")
    support = np.unique(np.asarray(list(support), dtype=np.int64))
    if support.size == 0:
        raise ValueError("support must be non-empty")
    off = np.setdiff1d(np.arange(d), support)
    G = X.T @ X / n

    def quad(t):
        t = t / np.linalg.norm(t)
        return float(t @ G @ t)

    best_t, best_v = None, math.inf
    for _ in range(trials):
        t = _cone_direction(rng, support, off, d)
        if not np.any(t):
            continue
        v = quad(t)
        if v < best_v:
            best_t, best_v = t / np.linalg.norm(t), v
    step = 0.1
    for _ in range(refine_steps):
        cand = best_t + step * rng.standard_normal(d)
        if np.any(cand) and _in_cone(cand, support, off):
            v = quad(cand)
            if v < best_v:
                best_t, best_v = cand / np.linalg.norm(cand), v
                continue
        step = max(step * 0.97, 1e-6)
    return best_v
