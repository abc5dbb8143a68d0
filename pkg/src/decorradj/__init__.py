"""Decorrelated regression adjustment for average treatment effects in
finite-population randomized experiments."""

from .decorrelation import DecorrelationProbs, QuadrupleDraw, draw_assignment, draw_quadruples
from .estimators import EstimateReport, adj, dc, dim, v_hat
from .population import FinitePopulation, ResidualSet, ate, observe

__all__ = [
    "DecorrelationProbs",
    "EstimateReport",
    "FinitePopulation",
    "QuadrupleDraw",
    "ResidualSet",
    "adj",
    "ate",
    "dc",
    "dim",
    "draw_assignment",
    "draw_quadruples",
    "observe",
    "v_hat",
]

__version__ = "0.1.0"
