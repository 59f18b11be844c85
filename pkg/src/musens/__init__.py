"""Sum-rate sensitivity to the number of served users in a multi-antenna downlink.

Modules: ``matgen`` (channels, log-determinants, eigenvalues), ``capacity``
(Monte Carlo sum-rates and power allocation), ``closed_form`` (large-system
analytics), ``maxchi`` (strongest-user gain statistics), ``precoder``
(vector perturbation) and ``cli``.
"""

from .errors import DimensionError, DomainError, MusensError, NumericError, RangeError

__version__ = "0.1.0"

__all__ = ["DimensionError", "DomainError", "MusensError", "NumericError", "RangeError"]
