"""Unknown-input observers synthesized directly from input/output/state data."""

from .linalg import DEFAULT_TOL, NumericalError, Tolerance
from .lti import LtiSystem, simulate
from .trajectory import HankelBlocks, Trajectory, build_blocks, hankel
from .uio import (
    ExistenceReport,
    UioRealization,
    XiPartition,
    run_estimator,
    synthesize,
)

__all__ = [
    "DEFAULT_TOL", "NumericalError", "Tolerance",
    "LtiSystem", "simulate",
    "HankelBlocks", "Trajectory", "build_blocks", "hankel",
    "ExistenceReport", "UioRealization", "XiPartition", "run_estimator", "synthesize",
]
__version__ = "0.1.0"
