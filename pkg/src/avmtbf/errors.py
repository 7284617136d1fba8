"""Exception hierarchy shared by all modules."""


class AvMtbfError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(AvMtbfError, ValueError):
    """Inputs violate a documented invariant (bad config, bad probabilities)."""


class DataError(AvMtbfError):
    """Input data files are missing, malformed or empty."""


class SchemaVersionError(ValidationError):
    """A serialized document carries an unknown schema version."""


class UnsatisfiableRequirement(AvMtbfError):
    """No perception error rate can meet the requested target."""
