"""Backward Monte Carlo solver for HJB equations driven by jump-diffusions."""
from .errors import (
    CannotSampleError,
    ConfigError,
    InfiniteMassError,
    LevyMCError,
    NumericalAbort,
    QuadratureError,
    SingularDiffusionError,
)
from .hjb import (
    Control,
    ControlledProblem,
    ThetaKappa,
    TruncationLevel,
    evaluate_F,
    evaluate_F_monotonized,
    select_kappa_convergence,
    select_kappa_rate,
    theta_kappa,
)
from .jumpdiff import CoefficientField, OneStepSample, StepBatch, euler_step, node_stream, simulate_batch
from .levy import LevyMeasure
from .mcq import McqEstimate, levy_operator_mcq, levy_operator_quadrature, nu_hat
from .scheme import KappaRule, SchemeConfig, UniformGrid, ValueSurface, apply_T, solve_backward
from .weights import DerivativeTriple, estimate_derivatives, weight

__version__ = "0.1.0"
