"""Frequency-response fault diagnosis of transformer disc windings.

Synthetic FRA data from a ladder-network simulator, numpy MLP classifiers,
cross-validation, classifier fusion and a two-stage EE/CIW diagnosis pipeline.
"""

from .errors import DomainError, FormatError, NumericalError

__version__ = "0.1.0"

__all__ = ["DomainError", "FormatError", "NumericalError", "__version__"]
