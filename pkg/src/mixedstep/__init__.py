"""Mixed-precision Bogacki-Shampine 3(2) solver for coupled agent systems."""

from .precision import D, S, FloatFormat, PrecisionPolicy, StagePrecision, Variant, policy_for, round_to
from .solver import BS32, DP54, SolveResult, SolverConfig, Status, bs32_step, dp54_reference, solve
from .systems import eval_rhs, lco_analytic, make_cc, make_kuramoto, make_lco, make_linear

__version__ = "0.1.0"
