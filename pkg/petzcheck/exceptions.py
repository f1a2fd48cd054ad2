"""
Exception hierarchy for petzcheck.

Every failure raised by the library derives from ``PetzCheckError``. Errors
caused by an invalid argument additionally derive from ``ValueError`` so
callers that only know about the standard library can still catch them.
"""


class PetzCheckError(Exception):
    """ Base class for all petzcheck errors. """


class InvalidAlgebraError(PetzCheckError, ValueError):
    """ Block dimensions or trace weights do not describe a tracial state. """


class AlgebraMismatchError(PetzCheckError, ValueError):
    """ Two operands live in different algebras. """


class NotHermitianError(PetzCheckError, ValueError):
    """ An element expected to be Hermitian is not, within tolerance. """


class NotPositiveError(PetzCheckError, ValueError):
    """ An element expected to be positive semidefinite has negative spectrum. """


class NotAStateError(PetzCheckError, ValueError):
    """ A positive element does not have unit trace. """


class FloorViolationError(PetzCheckError, ValueError):
    """ A spectrum lies at or below the invertibility floor, or the floor is infeasible. """


class MalformedChannelError(PetzCheckError, ValueError):
    """ Kraus operators violate block preservation, complete positivity or trace preservation. """


class StrictnessError(PetzCheckError):
    """ A channel maps the reference state to an element below the strictness floor. """


class NumericalBreakdownError(PetzCheckError):
    """ A computation produced numbers outside the range double precision can certify. """


class NotAContractionError(PetzCheckError, ValueError):
    """ An operator expected to be a contraction has norm above one. """


class InequalityViolationError(PetzCheckError):
    """ A checked inequality failed by more than its slack floor. """


class ConfigError(PetzCheckError, ValueError):
    """ Harness configuration is invalid. """


class InstanceFormatError(PetzCheckError, ValueError):
    """ A persisted trial instance cannot be parsed. """
