"""Frozen Gaussian sampling for high-frequency scalar wave equations."""
import os

# the TBB layer is not always installed; the work-queue layer always is
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from .errors import ConfigError, FGSError, NumericalError  # noqa: E402
from .model import (ConstantVelocity, CustomVelocity, GaussianAmplitude, GaussianInitialData,  # noqa: E402
                    Grid, PhasePoint, PolynomialGaussianAmplitude, QuadraticPhase, SineSumVelocity,
                    WKBInitialData, eval_velocity, validate_initial_data)
from .rays import Branch, TrajectoryState, evolve, evolve_batch, ode_rhs  # noqa: E402
from .decomposition import psi_values  # noqa: E402
from .sampling import sample  # noqa: E402
from .reconstruction import WaveField, energy_norm, energy_norm_diff, reconstruct  # noqa: E402
from .reference import ReferenceConfig, solve_reference  # noqa: E402
from .pipeline import FGSRun  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "Branch", "ConfigError", "ConstantVelocity", "CustomVelocity", "FGSError", "FGSRun",
    "GaussianAmplitude", "GaussianInitialData", "Grid", "NumericalError", "PhasePoint",
    "PolynomialGaussianAmplitude", "QuadraticPhase", "ReferenceConfig", "SineSumVelocity",
    "TrajectoryState", "WKBInitialData", "WaveField", "energy_norm", "energy_norm_diff",
    "eval_velocity", "evolve", "evolve_batch", "ode_rhs", "psi_values", "reconstruct", "sample",
    "solve_reference", "validate_initial_data",
]
