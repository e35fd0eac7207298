"""Exception types shared across the package.

Two broad categories matter to callers (and to the CLI exit-code mapping):
``DataError`` for malformed or inconsistent inputs, ``NumericalError`` for
solver or conditioning failures.
"""


class GpSimplifyError(Exception):
    """Base class for all package errors."""


class DataError(GpSimplifyError):
    """Invalid, malformed, or inconsistent input data."""


class NumericalError(GpSimplifyError):
    """A numerical routine failed (conditioning, convergence, overflow)."""


# --- cloud I/O ---------------------------------------------------------

class MalformedHeader(DataError):
    """A PLY header (or file body structure) could not be parsed."""


class NonFiniteCoordinate(DataError):
    """A point coordinate is NaN or infinite."""


class UnsupportedFormat(DataError):
    """File uses a format variant outside the supported set."""


class EmptyInput(DataError):
    """Input stream is empty."""


class IoFailure(DataError):
    """Reading or writing a stream failed."""


class EmptyCloud(DataError):
    """Operation requires a non-empty point cloud."""


class InvalidCloud(DataError):
    """Cloud violates a structural invariant (size, attribute lengths)."""


# --- spatial / geometry ------------------------------------------------

class NonPositiveRadius(DataError):
    """Radius query called with r <= 0."""


class KOutOfRange(DataError):
    """Neighbor/sample count outside [1, N]."""


class CoincidentPoints(DataError):
    """All points coincide; no geometric scale can be derived."""


# --- kernels -----------------------------------------------------------

class UnsupportedNu(DataError):
    """Smoothness value has no closed form for this kernel family."""


class GraphTooSmall(DataError):
    """Not enough points to build the requested kNN graph."""


class NodeNotInBasis(DataError):
    """Node index outside the Laplacian basis."""


class ConvergenceFailure(NumericalError):
    """Iterative eigensolver exhausted its budget."""


# --- gp ----------------------------------------------------------------

class FactorStale(NumericalError):
    """GP state arrays are inconsistent with its Cholesky factor."""


class EmptyQuery(DataError):
    """Prediction requested for an empty query set."""


class IndefiniteBlock(NumericalError):
    """Kernel matrix (or Schur complement) not positive definite after jitter."""


class NonFiniteObjective(NumericalError):
    """Optimization objective became non-finite with no finite iterate."""


# --- simplify ----------------------------------------------------------

class LengthMismatch(DataError):
    """Paired vectors have different lengths."""


class BatchTooLarge(DataError):
    """Requested batch exceeds the remainder set."""


class TargetTooLarge(DataError):
    """Target size M must be smaller than the (working) cloud."""
