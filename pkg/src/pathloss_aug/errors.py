"""Exception types shared across the package."""


class PathlossAugError(Exception):
    """Base class for every error raised on purpose by this package."""


class RasterFormatError(PathlossAugError, ValueError):
    pass


class OutOfBoundsError(PathlossAugError, ValueError):
    pass


class NodataError(PathlossAugError, ValueError):
    pass


class ModelFormatError(PathlossAugError, ValueError):
    pass


class SchemaError(PathlossAugError, ValueError):
    """A CSV or JSON input does not match its documented layout."""


class ConfigError(PathlossAugError, ValueError):
    pass


class DomainWarning(UserWarning):
    """An empirical model was evaluated outside its recommended range."""
