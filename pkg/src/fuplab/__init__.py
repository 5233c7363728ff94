"""Porosity certificates, explicit constant chains, damping weights and discrete FUP experiments."""

__version__ = "0.1.0"

from .errors import (ConvergenceError, FuplabError, IncompatibleError, InconsistencyError,
                     OutOfBoundsError, ResolutionError, ValidationError)
from .geometry import DyadicSet, IFSSpec, build_cantor, build_koch, middle_thirds
from .loglog import LogLogReal
from .constants import beta_fup, fup_chain, spectral_gap_chain
from .porosity import certify_ball_porosity, certify_box_porosity, certify_line_porosity
from .weights import build_weight, eval_weight, verify_hypotheses
from .numerics import dft_submatrix_norm, fio_norm, fit_exponent, fup_decay_series
from .resonances import essential_gap, fuchsian_resonances

__all__ = [
    "ConvergenceError", "FuplabError", "IncompatibleError", "InconsistencyError", "OutOfBoundsError",
    "ResolutionError", "ValidationError", "DyadicSet", "IFSSpec", "build_cantor", "build_koch",
    "middle_thirds", "LogLogReal", "beta_fup", "fup_chain", "spectral_gap_chain",
    "certify_ball_porosity", "certify_box_porosity", "certify_line_porosity", "build_weight",
    "eval_weight", "verify_hypotheses", "dft_submatrix_norm", "fio_norm", "fit_exponent",
    "fup_decay_series", "essential_gap", "fuchsian_resonances",
]
