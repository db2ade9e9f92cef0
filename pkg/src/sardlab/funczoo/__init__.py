"""Registry of test mappings: an expression DSL plus built-in constructions."""

from .builtins import (
    BUILTINS,
    builtin,
    cantor_bump,
    cantor_staircase,
    conformal_square,
    linear_rank,
    meets_cantor,
    paraboloid,
    parse_map,
    resolve_map,
)
from .dsl import ParseError, differentiate, parse_expr, parse_exprs, simplify
from .mapspec import GateError, MapSpec, Smoothness, derivative_gate, holder_gate, validate

__all__ = [
    "BUILTINS",
    "GateError",
    "MapSpec",
    "ParseError",
    "Smoothness",
    "builtin",
    "cantor_bump",
    "cantor_staircase",
    "conformal_square",
    "derivative_gate",
    "differentiate",
    "holder_gate",
    "linear_rank",
    "meets_cantor",
    "paraboloid",
    "parse_expr",
    "parse_exprs",
    "parse_map",
    "resolve_map",
    "simplify",
    "validate",
]
