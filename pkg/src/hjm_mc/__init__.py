"""Monte Carlo Euler schemes for HJM forward-rate models with dual-based weak error estimates."""

from .grid import Grid, NestingViolation, build_nested_grid, build_uniform_grid, validate_nesting
from .models import HjmModel, make_model
from .payoff import PayoffSpec, builtin_rule, make_payoff

__all__ = [
    "Grid",
    "NestingViolation",
    "build_nested_grid",
    "build_uniform_grid",
    "validate_nesting",
    "HjmModel",
    "make_model",
    "PayoffSpec",
    "builtin_rule",
    "make_payoff",
]
