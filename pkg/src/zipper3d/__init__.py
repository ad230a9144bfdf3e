"""Self-similar zipper arcs in R^3 with a one-point self-intersection pattern."""

from .geom import Bicone, Similarity3, compose, identity_distance, inverse, power
from .zipper import (LinearZipper, Zipper, ZipperError, holder_exponent, parametrize, refine,
                     similarity_dimension, validate)
from .family import FamilyConfig, FamilyError, ParamXi, build_zipper, default_xi
from .cstar import GenPair, cone_sequence, kronecker_test, phase_coverage, ratio_sequence
from .certify import jordan_check, min_gap, scan_d

__version__ = "0.1.0"

__all__ = [
    "Bicone", "Similarity3", "compose", "identity_distance", "inverse", "power",
    "LinearZipper", "Zipper", "ZipperError", "holder_exponent", "parametrize", "refine",
    "similarity_dimension", "validate",
    "FamilyConfig", "FamilyError", "ParamXi", "build_zipper", "default_xi",
    "GenPair", "cone_sequence", "kronecker_test", "phase_coverage", "ratio_sequence",
    "jordan_check", "min_gap", "scan_d",
]
