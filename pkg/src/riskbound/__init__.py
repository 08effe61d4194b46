"""High-confidence sample-based bounds on tail risk, with verification and synthesis tools."""

__version__ = "0.1.0"

from .errors import InvalidInput, SearchError, SimulationError
from .risk_core import (
    ConfidenceSpec,
    EssentialBound,
    SampleSet,
    expectation_bound,
    min_samples,
    scenario_max,
    var_bound_confidence,
)
from .g_entropic import BoundResult, LossSpec, SearchConfig, bound_cvar, bound_evar, bound_g_entropic
from .decision_select import DecisionDomain, SelectionReport, good_decision

__all__ = [
    "__version__",
    "InvalidInput",
    "SearchError",
    "SimulationError",
    "ConfidenceSpec",
    "EssentialBound",
    "SampleSet",
    "expectation_bound",
    "min_samples",
    "scenario_max",
    "var_bound_confidence",
    "BoundResult",
    "LossSpec",
    "SearchConfig",
    "bound_cvar",
    "bound_evar",
    "bound_g_entropic",
    "DecisionDomain",
    "SelectionReport",
    "good_decision",
]
