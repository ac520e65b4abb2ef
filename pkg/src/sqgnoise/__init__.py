"""Pseudo-spectral tools for the stochastic SQG equation with random diffusion on the 2-torus."""

__version__ = "0.1.0"

from .bilinear import bilinear_B_direct, bilinear_B_fft
from .spectral import (
    FourierField,
    GevreyParams,
    OverflowGuardError,
    SpectralGrid,
    gamma_apply,
    gevrey_norm,
    make_field,
    random_field,
    sobolev_norm,
)
from .stochastic import BrownianPath, mc_crossing_probability, refine, sample_path

__all__ = [
    "BrownianPath",
    "FourierField",
    "GevreyParams",
    "OverflowGuardError",
    "SpectralGrid",
    "bilinear_B_direct",
    "bilinear_B_fft",
    "gamma_apply",
    "gevrey_norm",
    "make_field",
    "mc_crossing_probability",
    "random_field",
    "refine",
    "sample_path",
    "sobolev_norm",
]
