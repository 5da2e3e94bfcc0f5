"""Blow-up branches of the shadow cross-diffusion system and their instability."""
from .errors import SKTError
from .model import EpsilonContext, Params
from .basis import Domain1D, EigenMode, FieldPair, neumann_eigenpair
from .reduction import ReducedRoot, reduce
from .solver import Branch, BranchPoint, StationaryProblem, continue_branch, eta_homotopy
from .spectra import EigenResult, assemble_pencil, eigen_near_zero
from .evolution import EvolutionState, GrowthResult, growth_rate, step_shadow, step_skt

__version__ = "0.1.0"

__all__ = [
    "SKTError", "EpsilonContext", "Params", "Domain1D", "EigenMode", "FieldPair",
    "neumann_eigenpair", "ReducedRoot", "reduce", "Branch", "BranchPoint", "StationaryProblem",
    "continue_branch", "eta_homotopy", "EigenResult", "assemble_pencil", "eigen_near_zero",
    "EvolutionState", "GrowthResult", "growth_rate", "step_shadow", "step_skt",
]
