"""Exact and numerical tools for L^q dimensions of homogeneous self-similar measures."""

from __future__ import annotations

from .measures import (
    DiscreteMeasure,
    DyadicHistogram,
    ResourceError,
    convolve,
    dyadic_bin,
    entropy,
    invariant_histogram,
    level_n_measure,
    power_sum,
    q_norm,
)
from .scalars import Quadratic, canonical_key, golden, parse_scalar, sign, to_float
from .separation import certified_gamma_lower_bound, detect_exact_overlap, separation_number
from .spectrum import estimate_tau, fekete_bounds, garsia, legendre_transform
from .wifs import Wifs, normalize_to_unit, preset, similarity_dimensions, square_if_negative

__version__ = "0.1.0"

__all__ = [
    "DiscreteMeasure",
    "DyadicHistogram",
    "Quadratic",
    "ResourceError",
    "Wifs",
    "canonical_key",
    "certified_gamma_lower_bound",
    "convolve",
    "detect_exact_overlap",
    "dyadic_bin",
    "entropy",
    "estimate_tau",
    "fekete_bounds",
    "garsia",
    "golden",
    "invariant_histogram",
    "legendre_transform",
    "level_n_measure",
    "normalize_to_unit",
    "parse_scalar",
    "power_sum",
    "preset",
    "q_norm",
    "separation_number",
    "sign",
    "similarity_dimensions",
    "square_if_negative",
    "to_float",
]
