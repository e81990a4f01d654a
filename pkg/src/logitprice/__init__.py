"""Global pricing optimization under discrete mixed logit demand."""
__version__ = "0.1.0"

from .model import (
    Alternative,
    MixedLogitInstance,
    choice_probabilities,
    expected_revenue,
    market_shares,
    ratio_denominator,
    revenue_gradient,
    f_gradient,
    systematic_utility,
)
from .lp import LinearProgram, LpBasis, LpSolution, LpStatus, solve_lp
from .local_search import LocalSearchConfig, local_search
from .bnb import SolveConfig, SolveReport, SolveStatus, solve
from .instances import continuous_ml_revenue, intel_instance, parking_instance, random_instance
from .io import load_instance, save_instance
