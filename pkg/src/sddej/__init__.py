"""Truncated Euler schemes for stochastic delay equations with jumps.

The pieces, roughly in dependency order:

* :mod:`sddej.models` -- coefficient triples, built-in benchmark models
* :mod:`sddej.truncation` -- dominating envelopes, truncation radii, projection
* :mod:`sddej.noise` -- reproducible Brownian/Poisson increments on a base grid
* :mod:`sddej.scheme` -- the explicit schemes themselves (plus interpolants)
* :mod:`sddej.analysis` -- strong-error rates, moment estimates, rate formulas
* :mod:`sddej.assumptions` -- Monte Carlo falsification of the standing
  structural inequalities
* :mod:`sddej.cli` -- ``sddej`` command-line front end
"""

from .analysis import (
    MomentReport,
    RateReport,
    cap_condition_holds,
    l2_rate_exponent,
    moment_estimate,
    strong_error,
    sub2_rate_exponent,
)
from .assumptions import Assumption, CheckReport, check_assumption
from .errors import (
    ConfigError,
    DomainError,
    GridError,
    InsufficientDataError,
    InvalidParamError,
    MissingConstantError,
    NonFiniteError,
    SddejError,
)
from .models import (
    AssumptionConstants,
    ModelSpec,
    build_model,
    cubic_delay_benchmark,
    linear_jump_diffusion_oracle,
)
from .noise import NoiseBundle, aggregate, generate
from .scheme import (
    OVERFLOW_LIMIT,
    SchemeTag,
    SolutionPath,
    StepSize,
    compiled_backend_available,
    integrate,
    integrate_many,
    integrate_plain_em,
    interp_continuous,
    interp_pc,
    run_batch,
)
from .truncation import (
    EmpiricalPhi,
    PowerPhi,
    Regime,
    TruncationConfig,
    alpha,
    fit_empirical_phi,
    pi_delta,
    truncation_radius,
)

__version__ = "0.1.0"

__all__ = [
    "Assumption",
    "AssumptionConstants",
    "CheckReport",
    "ConfigError",
    "DomainError",
    "EmpiricalPhi",
    "GridError",
    "InsufficientDataError",
    "InvalidParamError",
    "MissingConstantError",
    "ModelSpec",
    "MomentReport",
    "NoiseBundle",
    "NonFiniteError",
    "OVERFLOW_LIMIT",
    "PowerPhi",
    "RateReport",
    "Regime",
    "SchemeTag",
    "SddejError",
    "SolutionPath",
    "StepSize",
    "TruncationConfig",
    "aggregate",
    "alpha",
    "build_model",
    "cap_condition_holds",
    "check_assumption",
    "compiled_backend_available",
    "cubic_delay_benchmark",
    "fit_empirical_phi",
    "generate",
    "integrate",
    "integrate_many",
    "integrate_plain_em",
    "interp_continuous",
    "interp_pc",
    "l2_rate_exponent",
    "linear_jump_diffusion_oracle",
    "moment_estimate",
    "pi_delta",
    "run_batch",
    "strong_error",
    "sub2_rate_exponent",
    "truncation_radius",
    "__version__",
]
