"""Point estimators, variance formulas and confidence intervals for the ATE.

Non-Hajek estimators divide by the deterministic expected counts
``n * pi``; only the ``hajek_*`` functions use realized counts.

The non-Hajek point and variance estimators also accept a stack of
assignments: outcome and indicator arrays of shape ``(S, n)`` give ``S``
results at once (fitted vectors stay of length ``n``).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .decorrelation import DecorrelationProbs, QuadrupleDraw
from .population import FinitePopulation, ResidualSet, inner_n, observe
from .regressors import FittedFunction

METHODS = (
    "dim",
    "adj",
    "dc",
    "adj_oracle",
    "dc_oracle",
    "hajek_dim",
    "hajek_adj",
    "hajek_dc",
    "hajek_adj_oracle",
    "hajek_dc_oracle",
    "external_baseline",
)


class InformationBarrierError(ValueError):
    """A fitted function was trained on units it must not have seen."""


class DegenerateAssignmentError(ValueError):
    """A realized group count is zero."""


def _vec(a, n=None, batch=False):
    a = np.asarray(a, dtype=float)
    ok_dim = a.ndim in (1, 2) if batch else a.ndim == 1
    if not ok_dim or (n is not None and a.shape[-1] != n):
        raise ValueError("length mismatch")
    return a


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def _preds(f, n):
    return _vec(f.predictions if isinstance(f, FittedFunction) else f, n)


def _check_pi(pi_T):
    if not (0.0 < pi_T < 1.0):
        raise ValueError("pi_T must lie strictly inside (0, 1)")


# ------------------------------------------------------------------- normal z


# Acklam's rational approximation to the inverse normal CDF.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_quantile(p: float) -> float:
    """Standard normal quantile.

    Acklam's approximation (relative error below 1.2e-9) followed by one
    Halley correction step against ``math.erfc``.
    """
    if not (0.0 < p < 1.0):
        raise ValueError("p must lie in (0, 1)")
    if p < _P_LOW:
        q = math.sqrt(-2 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    elif p <= 1 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
            ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1)
    else:
        q = math.sqrt(-2 * math.log1p(-p))
        x = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    e = 0.5 * math.erfc(-x / math.sqrt(2)) - p
    u = e * math.sqrt(2 * math.pi) * math.exp(x * x / 2)
    return x - u / (1 + x * u / 2)


def z_alpha(alpha: float) -> float:
    """Two-sided critical value: the ``1 - alpha/2`` normal quantile."""
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    return normal_quantile(1.0 - alpha / 2.0)


def confidence_interval(point: float, v_hat: float, n: int, alpha: float = 0.05):
    """``point -/+ z_alpha * sqrt(v_hat / n)``."""
    if v_hat < 0:
        raise ValueError("variance estimate must be nonnegative")
    half = z_alpha(alpha) * math.sqrt(v_hat / n)
    return point - half, point + half


@dataclass(frozen=True)
class EstimateReport:
    method: str
    point: float
    variance_hat: float | None
    ci_low: float | None
    ci_high: float | None
    alpha_level: float
    n: int

    @classmethod
    def build(cls, method, point, variance_hat, n, alpha=0.05):
        if variance_hat is None:
            return cls(method, float(point), None, None, None, alpha, n)
        lo, hi = confidence_interval(point, variance_hat, n, alpha)
        return cls(method, float(point), float(variance_hat), lo, hi, alpha, n)

    def to_dict(self):
        return asdict(self)

    def to_json(self) -> str:
        """One JSON object with doubles written to 17 significant digits."""
        parts = []
        for k, v in self.to_dict().items():
            if isinstance(v, float):
                val = "null" if not math.isfinite(v) else format(v, ".17g")
            else:
                val = json.dumps(v)
            parts.append(f"{json.dumps(k)}: {val}")
        return "{" + ", ".join(parts) + "}"


# -------------------------------------------------------------- basic formulas


def dim(y_obs, T, pi_T: float) -> float:
    """Difference in means with denominators ``n pi_T`` and ``n (1 - pi_T)``."""
    _check_pi(pi_T)
    y = _vec(y_obs, batch=True)
    n = y.shape[-1]
    T = _vec(T, n, batch=True)
    return _out((y * T).sum(-1) / (n * pi_T) - (y * (1 - T)).sum(-1) / (n * (1 - pi_T)))


def dim_variance_true(pop: FinitePopulation, pi_T: float) -> float:
    """``n * Var(dim)`` computed from both potential outcomes."""
    _check_pi(pi_T)
    y1, y0 = pop.y1, pop.y0
    return float(np.mean((1 - pi_T) / pi_T * y1**2 + pi_T / (1 - pi_T) * y0**2 + 2 * y1 * y0))


def _adjusted(y, w1, w0, c1, c0, f1, f0):
    n = y.shape[-1]
    return _out(((y - f1) * w1).sum(-1) / c1 - ((y - f0) * w0).sum(-1) / c0 + (f1 - f0).sum() / n)


def adj(y_obs, T, f1hat, f0hat, pi_T: float) -> float:
    """Classical regression adjustment with arm-wise fitted functions."""
    _check_pi(pi_T)
    y = _vec(y_obs, batch=True)
    n = y.shape[-1]
    T = _vec(T, n, batch=True)
    return _adjusted(y, T, 1 - T, n * pi_T, n * (1 - pi_T), _preds(f1hat, n), _preds(f0hat, n))


def adj_oracle(pop: FinitePopulation, T, f1star, f0star, pi_T: float) -> float:
    return adj(observe(pop, T), T, f1star, f0star, pi_T)


def adj_oracle_variance(resid: ResidualSet, pi_T: float) -> float:
    """``n * Var(adj_oracle)``: the DIM formula applied to residuals."""
    _check_pi(pi_T)
    d1, d0 = resid.delta1, resid.delta0
    return float(np.mean((1 - pi_T) / pi_T * d1**2 + pi_T / (1 - pi_T) * d0**2 + 2 * d1 * d0))


def _check_barrier(fit, allowed, name):
    if isinstance(fit, FittedFunction) and fit.train_mask is not None:
        if np.any(fit.train_mask & ~allowed.astype(bool)):
            raise InformationBarrierError(f"{name} was trained outside its fitting subset")


def dc(y_obs, quad: QuadrupleDraw, fR, fRbar, probs: DecorrelationProbs) -> float:
    """Decorrelated regression adjustment.

    ``fR`` must be trained only on units with ``R = 1`` and ``fRbar`` only on
    units with ``Rbar = 1``; the averaging uses ``M`` and ``Mbar`` with
    denominators ``n pi_M`` and ``n pi_Mbar``.
    """
    y = _vec(y_obs, batch=True)
    n = y.shape[-1]
    if quad.T.shape[-1] != n:
        raise ValueError("length mismatch")
    _check_barrier(fR, quad.R, "fR")
    _check_barrier(fRbar, quad.Rbar, "fRbar")
    return _adjusted(
        y, quad.M, quad.Mbar, n * probs.pi_M, n * probs.pi_Mbar, _preds(fR, n), _preds(fRbar, n)
    )


def dc_oracle(pop: FinitePopulation, quad: QuadrupleDraw, f1star, f0star, probs) -> float:
    y = observe(pop, quad.T)
    n = pop.n
    return _adjusted(
        y, quad.M, quad.Mbar, n * probs.pi_M, n * probs.pi_Mbar, _preds(f1star, n), _preds(f0star, n)
    )


def dc_oracle_variance(resid: ResidualSet, probs: DecorrelationProbs) -> float:
    """``n * Var(dc_oracle)``."""
    pm, pmb = probs.pi_M, probs.pi_Mbar
    d1, d0 = resid.delta1, resid.delta0
    return float(
        (1 - pm) / pm * inner_n(d1, d1) + (1 - pmb) / pmb * inner_n(d0, d0) + 2 * inner_n(d1, d0)
    )


# The asymptotic variance of dc has the same expression.
sigma2_n = dc_oracle_variance


def delta_mse(resid: ResidualSet, probs: DecorrelationProbs) -> float:
    """Excess rescaled MSE of the DC oracle over the classical oracle.

    Equals ``dc_oracle_variance - adj_oracle_variance`` exactly.
    """
    pt, pm, pmb = probs.pi_T, probs.pi_M, probs.pi_Mbar
    d1, d0 = resid.delta1, resid.delta0
    return float(
        (1 - pm) / (pm * pt) * probs.pi_R * inner_n(d1, d1)
        + (1 - pmb) / (pmb * (1 - pt)) * probs.pi_Rbar * inner_n(d0, d0)
    )


def v_upper(resid: ResidualSet, probs: DecorrelationProbs) -> float:
    """Identifiable upper bound on :func:`sigma2_n`."""
    return float(np.mean(resid.delta1**2 / probs.pi_M + resid.delta0**2 / probs.pi_Mbar))


def v_hat(y_obs, quad: QuadrupleDraw, fR, fRbar, probs: DecorrelationProbs) -> float:
    """Unbiased estimate of :func:`v_upper` built from the averaging units."""
    y = _vec(y_obs, batch=True)
    n = y.shape[-1]
    r1 = y - _preds(fR, n)
    r0 = y - _preds(fRbar, n)
    return _out(
        (r1**2 * quad.M).sum(-1) / (n * probs.pi_M**2) + (r0**2 * quad.Mbar).sum(-1) / (n * probs.pi_Mbar**2)
    )


def dim_variance_plugin(y_obs, T, pi_T: float) -> float:
    _check_pi(pi_T)
    y = _vec(y_obs, batch=True)
    n = y.shape[-1]
    T = _vec(T, n, batch=True)
    return _out((y**2 * T).sum(-1) / (n * pi_T**2) + (y**2 * (1 - T)).sum(-1) / (n * (1 - pi_T) ** 2))


def adj_variance_plugin(y_obs, T, f1hat, f0hat, pi_T: float) -> float:
    _check_pi(pi_T)
    y = _vec(y_obs, batch=True)
    n = y.shape[-1]
    T = _vec(T, n, batch=True)
    r1 = y - _preds(f1hat, n)
    r0 = y - _preds(f0hat, n)
    return _out((r1**2 * T).sum(-1) / (n * pi_T**2) + (r0**2 * (1 - T)).sum(-1) / (n * (1 - pi_T) ** 2))


# ------------------------------------------------------------------ Hajek


@dataclass(frozen=True)
class HajekCounts:
    n1_tilde: int
    n0_tilde: int
    nM_tilde: int
    nMbar_tilde: int

    @classmethod
    def of(cls, T, quad: QuadrupleDraw | None = None):
        T = np.asarray(T)
        n1 = int(T.sum())
        nM = int(quad.M.sum()) if quad is not None else 0
        nMb = int(quad.Mbar.sum()) if quad is not None else 0
        return cls(n1, T.shape[0] - n1, nM, nMb)


def _need(*counts):
    if any(c == 0 for c in counts):
        raise DegenerateAssignmentError("a realized group count is zero")


def hajek_dim(y_obs, T) -> float:
    y = _vec(y_obs)
    T = _vec(T, y.shape[0])
    c = HajekCounts.of(T)
    _need(c.n1_tilde, c.n0_tilde)
    return _adjusted(y, T, 1 - T, c.n1_tilde, c.n0_tilde, np.zeros_like(y), np.zeros_like(y))


def hajek_adj(y_obs, T, f1hat, f0hat) -> float:
    y = _vec(y_obs)
    n = y.shape[0]
    T = _vec(T, n)
    c = HajekCounts.of(T)
    _need(c.n1_tilde, c.n0_tilde)
    return _adjusted(y, T, 1 - T, c.n1_tilde, c.n0_tilde, _preds(f1hat, n), _preds(f0hat, n))


def hajek_adj_oracle(pop: FinitePopulation, T, f1star, f0star) -> float:
    return hajek_adj(observe(pop, T), T, f1star, f0star)


def hajek_dc(y_obs, quad: QuadrupleDraw, fR, fRbar) -> float:
    y = _vec(y_obs)
    n = y.shape[0]
    c = HajekCounts.of(quad.T, quad)
    _need(c.nM_tilde, c.nMbar_tilde)
    _check_barrier(fR, quad.R, "fR")
    _check_barrier(fRbar, quad.Rbar, "fRbar")
    return _adjusted(y, quad.M, quad.Mbar, c.nM_tilde, c.nMbar_tilde, _preds(fR, n), _preds(fRbar, n))


def hajek_dc_oracle(pop: FinitePopulation, quad: QuadrupleDraw, f1star, f0star) -> float:
    return hajek_dc(observe(pop, quad.T), quad, f1star, f0star)


def _centered(v):
    return v - v.mean()


def hajek_variances(pop: FinitePopulation, resid: ResidualSet, probs: DecorrelationProbs) -> dict:
    """Asymptotic rescaled variances of the Hajek DIM and oracle estimators.

    Diagnostic only: these need both potential outcomes.
    """
    pt, pm, pmb = probs.pi_T, probs.pi_M, probs.pi_Mbar

    def form(a, b, c1, c0):
        a, b = _centered(a), _centered(b)
        return float(c1 * inner_n(a, a) + c0 * inner_n(b, b) + 2 * inner_n(a, b))

    return {
        "dim": form(pop.y1, pop.y0, (1 - pt) / pt, pt / (1 - pt)),
        "adj": form(resid.delta1, resid.delta0, (1 - pt) / pt, pt / (1 - pt)),
        "dc": form(resid.delta1, resid.delta0, (1 - pm) / pm, (1 - pmb) / pmb),
    }


def hajek_variants(
    y_obs,
    T,
    pi_T: float,
    quad: QuadrupleDraw | None = None,
    fits: dict | None = None,
    probs: DecorrelationProbs | None = None,
    alpha: float = 0.05,
) -> dict:
    """Hajek versions of DIM, adj and dc as :class:`EstimateReport` objects.

    ``fits`` may hold ``f1``/``f0`` (arm-wise fits, for adj) and ``fR``/``fRbar``
    (subset fits, for dc). Each report carries the variance estimate of the
    matching non-Hajek estimator.
    """
    y = _vec(y_obs)
    n = y.shape[0]
    fits = fits or {}
    out = {
        "hajek_dim": EstimateReport.build("hajek_dim", hajek_dim(y, T), dim_variance_plugin(y, T, pi_T), n, alpha)
    }
    if "f1" in fits and "f0" in fits:
        out["hajek_adj"] = EstimateReport.build(
            "hajek_adj",
            hajek_adj(y, T, fits["f1"], fits["f0"]),
            adj_variance_plugin(y, T, fits["f1"], fits["f0"], pi_T),
            n,
            alpha,
        )
    if quad is not None and probs is not None and "fR" in fits and "fRbar" in fits:
        out["hajek_dc"] = EstimateReport.build(
            "hajek_dc",
            hajek_dc(y, quad, fits["fR"], fits["fRbar"]),
            v_hat(y, quad, fits["fR"], fits["fRbar"], probs),
            n,
            alpha,
        )
    return out
