"""Statistical-CSI rate optimization for a morphable planar array downlink.

The library builds morph-dependent spatial correlation, evaluates closed-form
achievable rates under LMMSE channel estimation and maximal-ratio precoding,
and jointly optimizes per-user powers and the surface shape.
"""

from .bca import SolveResult, SolverConfig, run_bca
from .correlation import UserLinkStats, build_sigma_fim, build_user_covariance, sinc
from .estimation import PilotConfig, lmmse_bundle
from .geometry import SurfaceGeometry, build_reference_positions, project_morph
from .morph import MorphProblem, morph_block
from .power import InfeasibleError, optimize_power
from .rate import build_rate_context, rates, sum_rate
from .scenario import SCHEMES, ScenarioParams, SweepSpec, build_scenario, run_sweep, solve_scheme

__version__ = "0.1.0"

__all__ = [
    "InfeasibleError", "MorphProblem", "PilotConfig", "SCHEMES", "ScenarioParams", "SolveResult",
    "SolverConfig", "SurfaceGeometry", "SweepSpec", "UserLinkStats", "build_rate_context",
    "build_reference_positions", "build_scenario", "build_sigma_fim", "build_user_covariance",
    "lmmse_bundle", "morph_block", "optimize_power", "project_morph", "rates", "run_bca",
    "run_sweep", "sinc", "solve_scheme", "sum_rate",
]
