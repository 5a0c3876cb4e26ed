"""Kernel-based operational design domains derived from labelled data."""

from .derivation import DerivationConfig, DerivationReport, derive, enforce_ood
from .errors import (
    ConfigError,
    DataParseError,
    DegenerateHullError,
    DimensionMismatchError,
    IncompatibleVersionError,
    InfeasibleRegionError,
    ModelFormatError,
    NonConvergenceError,
    OddError,
    UndefinedRSquaredError,
    UnsatisfiableConstraintError,
)
from .kernel import AnchorKernel, Dataset, KernelConfig, Normalizer
from .model import KernelOdd

__version__ = "0.1.0"
