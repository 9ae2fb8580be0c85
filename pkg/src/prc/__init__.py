"""Pseudorandom error-correcting codes: constructions, amplification, attacks
and a Monte Carlo harness for their bias and success-probability claims."""

from prc.bits import BitString, RngStream, make_rng
from prc.core import Decoding, ZeroBitScheme
from prc.errors import ConfigError, LengthError, ParameterError, PreconditionError

__all__ = [
    "BitString",
    "ConfigError",
    "Decoding",
    "LengthError",
    "ParameterError",
    "PreconditionError",
    "RngStream",
    "ZeroBitScheme",
    "make_rng",
]
