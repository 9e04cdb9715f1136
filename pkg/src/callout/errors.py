"""Exception hierarchy shared across the package."""


class CalloutError(Exception):
    """Base class for all errors raised by this package."""


class InputError(CalloutError):
    """Malformed or invalid user input: files, matrices, options."""


class InfeasibleConfigError(CalloutError):
    """A generator config that cannot produce the requested output."""


class MetricError(CalloutError):
    """An evaluation metric cannot be computed from the given labels."""


class InternalError(CalloutError):
    """An internal invariant was violated; indicates a bug."""
