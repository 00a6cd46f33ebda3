"""Lie point-symmetry engine and audit harness for the potential CBS equation."""
from .expr import (
    Expr, MultiIndex, antideriv, const, diff, eval_numeric, exp_, fn, jet, normalize, param, power,
    substitute, total_derivative, var,
)

__all__ = [
    "Expr", "MultiIndex", "antideriv", "const", "diff", "eval_numeric", "exp_", "fn", "jet",
    "normalize", "param", "power", "substitute", "total_derivative", "var",
]
__version__ = "0.1.0"
