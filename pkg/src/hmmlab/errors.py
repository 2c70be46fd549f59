"""Exception hierarchy shared by all hmmlab modules."""


class HmmLabError(Exception):
    """Base class for every error raised by hmmlab."""


class DimensionMismatch(HmmLabError, ValueError):
    pass


class SizeCap(HmmLabError, ValueError):
    """A dense object would exceed the configured row cap."""


class NonConvergent(HmmLabError, RuntimeError):
    pass


class ZeroStationaryMass(HmmLabError, ValueError):
    pass


class OutOfRange(HmmLabError, ValueError):
    pass


class EmptyInput(HmmLabError, ValueError):
    pass


class AlphabetMismatch(HmmLabError, ValueError):
    pass


class InvalidSpec(HmmLabError, ValueError):
    pass


class BudgetExceeded(HmmLabError, ValueError):
    pass


class NotSymmetric(HmmLabError, ValueError):
    pass


class ZeroLikelihood(HmmLabError, ValueError):
    """The conditioning output string has probability zero."""


class InsufficientData(HmmLabError, ValueError):
    pass


class DecompositionError(HmmLabError, RuntimeError):
    """Base for simultaneous-diagonalization failures."""


class SingularProjection(DecompositionError):
    pass


class ComplexEigenvalues(DecompositionError):
    pass


class PairingFailure(DecompositionError):
    pass


class DegenerateSpectrum(PairingFailure):
    """Two projected eigenvalues coincide, so the eigenvectors are not unique.

    This happens when two columns of the third factor are parallel, i.e. the
    tensor violates Kruskal's condition and its decomposition is not unique.
    """


class RankDeficient(HmmLabError, RuntimeError):
    pass
