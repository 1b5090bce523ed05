"""Numerical laboratory for the oscillatory irregularity of paths.

Modules: core_path (sampled paths), simulate (Gaussian and stable processes),
spectral (Phi, occupation densities, Fourier-Lebesgue norms), irregularity
(envelopes and exponent fits), averaging (averaging operator), young_ode
(sewing, Young integrals, perturbed ODEs), geometry (roughness and dimension)
and labcli (configs, runs, harness, emission).
"""
__version__ = "0.1.0"

from .errors import InputError, IrrlabError, ResourceError, UnsupportedError
from .rng import Seed
from .core_path import SampledPath

__all__ = ["InputError", "IrrlabError", "ResourceError", "UnsupportedError", "Seed",
           "SampledPath", "__version__"]
