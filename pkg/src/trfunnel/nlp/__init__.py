"""Constrained NLP contract, bundled engines and the per-iteration subproblems."""

from .core import (
    INEXACT,
    INFEASIBLE,
    MAX_INNER,
    NUMERIC_FAILURE,
    SOLVED,
    NlpSolution,
    NlpSpec,
    kkt_residuals,
    register_engine,
    solve_nlp,
)
from .subproblems import (
    CriticalityWarning,
    compatibility_radius,
    compatibility_step,
    criticality_measure,
    project_glass_feasible,
    restoration_step,
    solve_trsp,
)

__all__ = [
    "INEXACT", "INFEASIBLE", "MAX_INNER", "NUMERIC_FAILURE", "SOLVED",
    "NlpSolution", "NlpSpec", "kkt_residuals", "register_engine", "solve_nlp",
    "CriticalityWarning", "compatibility_radius", "compatibility_step",
    "criticality_measure", "project_glass_feasible", "restoration_step", "solve_trsp",
]
