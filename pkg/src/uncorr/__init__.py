"""Positivity-preserving finite differences for two-asset options under
uncertain correlation."""
from .model import CorrelationBand, Edge, MarketParams, Scenario, default_params, drift_coefficients
from .grid import Field, Mesh
from .assembly import BoundaryData, BoundaryLayout, EdgeKind, assemble
from .linsolve import Method, solve
from .stepper import ConditionViolation, DtPolicy, LogProblem, SolverConfig, integrate, max_timestep
from .pricing import ProblemSpec, bs_price, make_tp
from .verify import mms_problem, run_mms, self_convergence

__version__ = "0.1.0"
