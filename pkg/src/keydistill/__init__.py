"""Bounds on distillable secret key for small tripartite quantum and classical states."""
from .linalg import SubsystemLayout
from .states import (ClassicalDistribution, DensityState, InvariantError, Povm, QuantumChannel,
                     named_example)
from .optimize import NumericError, OptimizerConfig
from .bounds import BoundEstimate

__all__ = ["SubsystemLayout", "ClassicalDistribution", "DensityState", "InvariantError", "Povm",
           "QuantumChannel", "named_example", "NumericError", "OptimizerConfig", "BoundEstimate"]
__version__ = "0.1.0"
