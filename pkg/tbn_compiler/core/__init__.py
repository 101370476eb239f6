"""Model, factor algebra, evidence streams and the brute-force oracle."""

from .factor import Factor, Slice, Var
from .model import Classification, TbnModel, classify, require_valid, validate
from .parser import format_model, load_model, parse_model

__all__ = [
    "Classification",
    "Factor",
    "Slice",
    "TbnModel",
    "Var",
    "classify",
    "format_model",
    "load_model",
    "parse_model",
    "require_valid",
    "validate",
]
