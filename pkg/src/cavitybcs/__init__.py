"""Classical pseudospin dynamics of two detuned ensembles coupled through a cavity."""

from .core import (ATTRACTIVE, REPULSIVE, InitialStateSpec, ModelParams, SpinState, SplittingSpec,
                   bcs_ground_state, prepare_initial_state, sample_splittings, solve_gap)

__version__ = "0.1.0"

__all__ = [
    "ATTRACTIVE", "REPULSIVE", "InitialStateSpec", "ModelParams", "SpinState", "SplittingSpec",
    "bcs_ground_state", "prepare_initial_state", "sample_splittings", "solve_gap", "__version__",
]
