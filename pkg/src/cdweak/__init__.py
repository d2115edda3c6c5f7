"""Exact weak-value extraction at finite coupling strength with coupling-deformed pointer observables."""

from . import cdsolver, coupling, errors, qcore, tomo
from .cdsolver import cd_observable, extract_numerator, q_matrix, q_matrix_weak_limit, s_matrix
from .coupling import CouplingSetup, GridPointer, QubitPointer, SystemObservable, joint_expectation
from .qcore import HermitianObservable

__version__ = "0.1.0"
