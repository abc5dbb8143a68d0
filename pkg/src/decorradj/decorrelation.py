"""Treatment assignment and the decorrelating quadruple sampler.

Each treated unit is split into a fitting indicator ``R`` and an averaging
indicator ``M`` (each control unit into ``Rbar`` and ``Mbar``) so that the
two indicators are independent Bernoulli variables even though both are
dominated by the treatment indicator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

COMPAT_TOL = 1e-12


def _check_open_prob(name: str, p: float) -> None:
    if not (0.0 < p < 1.0) or not math.isfinite(p):
        raise ValueError(f"{name} must lie strictly inside (0, 1), got {p!r}")


@dataclass(frozen=True)
class DecorrelationProbs:
    """Probabilities tying the treatment to the fitting/averaging subsets.

    Validated on construction: every field is in (0, 1) and both
    compatibility equations hold to ``1e-12``::

        pi_T     = pi_M    + pi_R    - pi_M * pi_R
        1 - pi_T = pi_Mbar + pi_Rbar - pi_Mbar * pi_Rbar
    """

    pi_T: float
    pi_R: float
    pi_M: float
    pi_Rbar: float
    pi_Mbar: float

    def __post_init__(self):
        for name in ("pi_T", "pi_R", "pi_M", "pi_Rbar", "pi_Mbar"):
            _check_open_prob(name, getattr(self, name))
        gap = self.pi_T - (self.pi_M + self.pi_R - self.pi_M * self.pi_R)
        if abs(gap) > COMPAT_TOL:
            raise ValueError(f"treated-side probabilities incompatible (residual {gap:.3e})")
        gap_bar = (1.0 - self.pi_T) - (
            self.pi_Mbar + self.pi_Rbar - self.pi_Mbar * self.pi_Rbar
        )
        if abs(gap_bar) > COMPAT_TOL:
            raise ValueError(f"control-side probabilities incompatible (residual {gap_bar:.3e})")

    @classmethod
    def from_fit_probs(cls, pi_T: float, pi_R: float, pi_Rbar: float | None = None):
        """Complete the quintuple from the treatment and fitting probabilities."""
        if pi_Rbar is None:
            pi_Rbar = pi_R
        return cls(
            pi_T=pi_T,
            pi_R=pi_R,
            pi_M=solve_mean_prob(pi_T, pi_R),
            pi_Rbar=pi_Rbar,
            pi_Mbar=solve_mean_prob(1.0 - pi_T, pi_Rbar),
        )

    @classmethod
    def symmetric(cls, pi_T: float):
        """The choice pi_R = pi_M on each side."""
        p = symmetric_prob(pi_T)
        q = symmetric_prob(1.0 - pi_T)
        return cls(pi_T=pi_T, pi_R=p, pi_M=p, pi_Rbar=q, pi_Mbar=q)

    def treated_weights(self) -> np.ndarray:
        """Categorical weights for a treated unit, in the order Z = 1, 2, 3."""
        return _cat_weights(self.pi_T, self.pi_M, self.pi_R)

    def control_weights(self) -> np.ndarray:
        return _cat_weights(1.0 - self.pi_T, self.pi_Mbar, self.pi_Rbar)


def _cat_weights(p_arm: float, p_mean: float, p_fit: float) -> np.ndarray:
    both = p_mean * p_fit
    return np.array([both, p_mean - both, p_fit - both]) / p_arm


def solve_mean_prob(pi_T: float, pi_R: float) -> float:
    """Averaging probability compatible with ``(pi_T, pi_R)``.

    Inverts ``pi_T = pi_M + pi_R - pi_M * pi_R`` for ``pi_M``.

    >>> solve_mean_prob(0.5, 0.25)
    0.3333333333333333
    """
    _check_open_prob("pi_T", pi_T)
    _check_open_prob("pi_R", pi_R)
    if pi_R >= pi_T:
        raise ValueError(f"pi_R ({pi_R}) must be smaller than pi_T ({pi_T})")
    return (pi_T - pi_R) / (1.0 - pi_R)


def symmetric_prob(pi_T: float) -> float:
    """Root in (0, 1) of ``pi_T = 2p - p**2``."""
    _check_open_prob("pi_T", pi_T)
    return 1.0 - math.sqrt(1.0 - pi_T)


def draw_assignment(n: int, pi_T: float, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. Bernoulli(pi_T) treatment indicators as an int8 vector.

    Unit ``i`` uses the ``i``-th uniform of the stream, so with a
    counter-based bit generator (Philox) its value depends only on the key
    and the unit index.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    _check_open_prob("pi_T", pi_T)
    return (rng.random(n) < pi_T).astype(np.int8)


@dataclass(frozen=True)
class QuadrupleDraw:
    T: np.ndarray
    R: np.ndarray
    M: np.ndarray
    Rbar: np.ndarray
    Mbar: np.ndarray

    @property
    def n(self) -> int:
        return self.T.shape[-1]


def _categorical(u: np.ndarray, w: np.ndarray) -> np.ndarray:
    # inverse CDF over the fixed order (1, 2, 3)
    z = np.full(u.shape, 3, dtype=np.int8)
    z[u < w[0] + w[1]] = 2
    z[u < w[0]] = 1
    return z


def quadruples_from_uniforms(T: np.ndarray, u: np.ndarray, probs: DecorrelationProbs) -> QuadrupleDraw:
    """Deterministic core of :func:`draw_quadruples` given one uniform per unit."""
    T = np.asarray(T).astype(np.int8)
    treated = T == 1
    z = np.where(
        treated,
        _categorical(u, probs.treated_weights()),
        _categorical(u, probs.control_weights()),
    )
    mean_like = (z == 1) | (z == 2)
    fit_like = (z == 1) | (z == 3)
    M = (mean_like & treated).astype(np.int8)
    R = (fit_like & treated).astype(np.int8)
    Mbar = (mean_like & ~treated).astype(np.int8)
    Rbar = (fit_like & ~treated).astype(np.int8)
    return QuadrupleDraw(T=T, R=R, M=M, Rbar=Rbar, Mbar=Mbar)


def draw_quadruples(T: np.ndarray, probs: DecorrelationProbs, rng: np.random.Generator) -> QuadrupleDraw:
    """Sample ``(R, M, Rbar, Mbar)`` for every unit conditional on ``T``.

    Treated units draw ``Z ~ Cat(pi_M pi_R, pi_M - pi_M pi_R, pi_R - pi_M pi_R) / pi_T``
    and set ``M = [Z in {1, 2}]``, ``R = [Z in {1, 3}]``; control units do
    the same with the barred probabilities.
    """
    T = np.asarray(T)
    if T.ndim != 1:
        raise ValueError("T must be a vector")
    if not np.isin(T, (0, 1)).all():
        raise ValueError("T must be binary")
    u = rng.random(T.shape[0])
    return quadruples_from_uniforms(T, u, probs)
