"""Approximate vanishing ideals of labeled point clouds and polynomial-layer classifiers."""

from .errors import ConfigError, DataError, NumericalError, VanidealError
from .polycore import Monomial, MonomialBasis, OrderIdeal, Polynomial
from .vanishing import Algorithm, GeneratorSet, VanishConfig, abm_fit, fit, oavi_fit

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "ConfigError",
    "DataError",
    "GeneratorSet",
    "Monomial",
    "MonomialBasis",
    "NumericalError",
    "OrderIdeal",
    "Polynomial",
    "VanidealError",
    "VanishConfig",
    "abm_fit",
    "fit",
    "oavi_fit",
]
