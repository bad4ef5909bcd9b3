"""Time-slicing approximations of Schrodinger propagators."""

from .classical import (
    PotentialModel,
    anharmonic,
    classical_bvp,
    free,
    generating_table,
    hamiltonian_flow,
    harmonic,
    potential_from_name,
    tameness_report,
)
from .estimators import ReferencePropagator, STFTTransformer, TimeSlicingPropagator
from .exceptions import (
    BoundaryMassError,
    CausticError,
    CoverageError,
    FitError,
    FocalTimeError,
    GuardError,
    ResolutionError,
)
from .experiments import RUNNERS, ExperimentConfig
from .gabor import CanonicalMap, PhaseLattice, Window, decay_fit, fio_seminorm, gabor_matrix, stft
from .grid import GridSpec, WaveFunction, dilate, fourier_transform, lp_norm, sobolev_norm
from .parametrix import Subdivision, compose_slices, parametrix_residual
from .reference import exact_propagator, free_propagator, mehler_propagator, split_step_reference

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
