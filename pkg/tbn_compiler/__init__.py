"""TBN compiler - fixed-resource exact filtering for temporal Bayes nets."""

from .config import Config
from .core.model import TbnModel
from .core.parser import load_model, parse_model
from .runtime.compiler import compile_model
from .runtime.instance import RuntimeInstance, new_instance

__version__ = "0.1.0"
__all__ = [
    "Config",
    "RuntimeInstance",
    "TbnModel",
    "compile_model",
    "load_model",
    "new_instance",
    "parse_model",
]
