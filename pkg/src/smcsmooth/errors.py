"""Exception types shared across the package."""


class SmcError(Exception):
    """Base class for errors raised by this package."""


class SupportError(SmcError, ValueError):
    """A parameter value lies outside its declared support."""

    def __init__(self, block, detail=""):
        self.block = block
        msg = f"parameter block '{block}' outside its support"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class DegenerateWeightsError(SmcError):
    """Every particle weight underflowed to zero at one time step."""

    def __init__(self, t=None, detail=""):
        self.t = t
        msg = "all particle weights degenerate"
        if t is not None:
            msg += f" at t={t}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NumericalDegeneracyError(SmcError):
    """A positivity or positive-definiteness invariant broke down."""


class InsufficientSampleError(SmcError, ValueError):
    """Too few particles to fit the requested approximation."""


class DataError(SmcError, ValueError):
    """Malformed input: bad CSV rows, shape mismatches, config mistakes."""


class MetricError(SmcError, ValueError):
    """A metric could not be computed (for example a zero reference sd)."""
