"""Krylov spectra of Lindblad generators from time-evolution snapshots."""
from .generator import Drive, LindbladModel, apply_liouvillian, expectation
from .kernels import BACKENDS, DEFAULT_BACKEND
from .krylov import SpectralResult, arnoldi_lindblad, steady_state_extract
from .models import preset
from .operators import DensityMatrix, HilbertSpec, random_density_matrix
from .propagator import IntegrationError, IntegratorConfig, propagate

__version__ = "0.1.0"

__all__ = [
    "BACKENDS", "DEFAULT_BACKEND", "DensityMatrix", "Drive", "HilbertSpec", "IntegrationError",
    "IntegratorConfig", "LindbladModel", "SpectralResult", "apply_liouvillian", "arnoldi_lindblad",
    "expectation", "preset", "propagate", "random_density_matrix", "steady_state_extract",
]
