"""Simulations of quantum systems with a randomly fluctuating Planck constant."""

__version__ = "0.1.0"

from .errors import HbarSimError, NumericalError, ValidationError
from .noise import NoiseParams, NoisePath, PhysicalConstants, SI, sample_path, sample_paths
from .ensemble import EnsembleConfig, EnsembleEstimate, estimate, estimate_variance_decomposed
