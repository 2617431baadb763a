"""Heavy-tailed bandits, supervised actor-critic trading, and the experiment harness."""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, InsufficientDataError, NumericError, ParamError

__all__ = [
    "ConfigError",
    "DataError",
    "InsufficientDataError",
    "NumericError",
    "ParamError",
    "__version__",
]
