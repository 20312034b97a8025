"""Free energy of multi-species mean-field spin glasses.

Evaluates the limit free energy by four independent routes (monotone
Parisi supremum, relaxed concave supremum, Hopf-dual infimum,
martingale infimum) and cross-checks their agreement.
"""

from .model import MixtureModel, SpinDistribution
from .measures import DiscreteMeasure, MonotonePath

__all__ = [
    "MixtureModel",
    "SpinDistribution",
    "DiscreteMeasure",
    "MonotonePath",
]

__version__ = "0.1.0"
