"""Exception hierarchy shared by every orthofield module."""


class OrthofieldError(Exception):
    """Base class for all errors raised by this package."""


class InvalidLawError(OrthofieldError):
    """A three-point law's parameters do not describe a probability law."""


class InvalidParameterError(OrthofieldError):
    """A numeric argument is outside its documented domain."""


class UnsupportedFamilyError(OrthofieldError):
    """The requested operation needs a built-in family, not a custom provider."""


class ResourceLimitError(OrthofieldError):
    """A requested computation would exceed the configured memory budget."""


class SurrogateValidityError(OrthofieldError):
    """A cyclic-shift request would wrap outside the exactly-representable range."""


class ScheduleOverflowError(OrthofieldError):
    """The scale recursion could not be satisfied within the configured depth."""


class InsufficientReplicationsError(OrthofieldError):
    """A Monte Carlo routine was asked for too few replications to report errors."""


class TooFewSamplesError(OrthofieldError):
    """An empirical summary needs more sample values than were supplied."""


class DegenerateSigmaError(OrthofieldError):
    """A normalising scale parameter must be strictly positive and finite."""


class ConfigError(OrthofieldError):
    """An experiment configuration failed schema validation.

    The message always carries a JSON-pointer-ish path to the offending key.
    """
