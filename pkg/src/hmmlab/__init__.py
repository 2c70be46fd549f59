"""Method-of-moments learning and diagnostics for overcomplete hidden Markov models."""
from .errors import HmmLabError
from .hmm import Hmm, likelihood_matrix, reverse_likelihood_matrix, stationary, time_reverse, validate
from .moments import MomentTensor, empirical_moment_tensor, exact_moment_tensor
from .recovery import RecoveredHmm, RecoveryOptions, recover
from .tensor import Tensor3, simultaneous_diagonalize

__all__ = [
    "HmmLabError",
    "Hmm",
    "likelihood_matrix",
    "reverse_likelihood_matrix",
    "stationary",
    "time_reverse",
    "validate",
    "MomentTensor",
    "empirical_moment_tensor",
    "exact_moment_tensor",
    "RecoveredHmm",
    "RecoveryOptions",
    "recover",
    "Tensor3",
    "simultaneous_diagonalize",
]

__version__ = "0.1.0"
