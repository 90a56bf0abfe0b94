"""Trust-region funnel and filter methods for constrained grey-box optimisation."""

from .benchmarks import BENCHMARKS, make_problem, reference_solution
from .driver import SolverOptions, SolverReport, TraceRecord, run
from .errors import (
    BoundsViolation,
    ConfigError,
    DegenerateGeometry,
    NonFiniteValue,
    RestorationFailed,
    SingularFit,
    TrFunnelError,
    UnknownProblem,
)
from .models import RM_FORMS, ReducedModel, build_rm, sample_design
from .params import AlgorithmParams
from .problem import EvaluationLedger, GreyBoxProblem, Point

__version__ = "0.1.0"

__all__ = [
    "BENCHMARKS", "make_problem", "reference_solution",
    "SolverOptions", "SolverReport", "TraceRecord", "run",
    "BoundsViolation", "ConfigError", "DegenerateGeometry", "NonFiniteValue",
    "RestorationFailed", "SingularFit", "TrFunnelError", "UnknownProblem",
    "RM_FORMS", "ReducedModel", "build_rm", "sample_design",
    "AlgorithmParams", "EvaluationLedger", "GreyBoxProblem", "Point",
]
