"""Exception hierarchy shared by every module."""


class EntropyError(Exception):
    """Base class for all package errors."""


class DuplicatePoints(EntropyError):
    """A k-th nearest neighbor distance is exactly zero."""


class InvalidK(EntropyError, ValueError):
    """k is not in 1..N-1."""


class OutOfDomain(EntropyError, ValueError):
    """Samples fall outside the unit cube required by the truncated estimators."""


class DomainError(EntropyError, ValueError):
    """Argument outside a special function's domain."""


class NonFinite(EntropyError, FloatingPointError):
    """A flow or integrator produced inf/nan values."""


class Diverged(EntropyError, RuntimeError):
    """Training loss or a simulated recursion blew up."""


class TooFewSamples(EntropyError, ValueError):
    """A data split is too small for the requested estimator."""
