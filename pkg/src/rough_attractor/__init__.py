"""Rough evolution equations driven by fractional Brownian rough paths.

Noise generation and canonical lifts, Hoelder norms and rough path metrics,
stopping-time sequences, a spectral Galerkin semigroup with interpolation
norms, the rough convolution solver, and pullback attractor estimates with
their smoothing (Wong-Zakai) convergence experiments.
"""

from .fbm import (FbmParams, GridPath, fbm_covariance, sample_fbm,
                  wiener_shift)
from .roughpath import (HolderReport, RoughPathGrid, canonical_lift,
                        chen_reconstruct, holder_norm, rough_distance,
                        wong_zakai_smooth)

__all__ = [
    "FbmParams", "GridPath", "fbm_covariance", "sample_fbm", "wiener_shift",
    "RoughPathGrid", "HolderReport", "canonical_lift", "chen_reconstruct",
    "holder_norm", "rough_distance", "wong_zakai_smooth",
]

__version__ = "0.1.0"
