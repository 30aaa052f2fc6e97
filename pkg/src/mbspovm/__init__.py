"""Nonprojective qudit measurements from multiport beamsplitters: construction, bounds and certification."""
from .errors import SolverNotConverged, ValidationError
from .game import ProbabilityTables, Strategy, protocol_strategy, score, score_breakdown
from .quantum_core import Povm

__all__ = [
    "Povm",
    "ProbabilityTables",
    "SolverNotConverged",
    "Strategy",
    "ValidationError",
    "protocol_strategy",
    "score",
    "score_breakdown",
]
