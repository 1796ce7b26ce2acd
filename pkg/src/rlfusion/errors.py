"""Exception types shared across the package."""


class ProtocolError(RuntimeError):
    """An API contract was violated (step after done, mismatched env, ...)."""


class CapacityError(RuntimeError):
    """A size guard on an exact-enumeration routine was exceeded."""


class ConfigurationError(ValueError):
    """An experiment configuration is invalid or incomplete."""


class FormatError(ValueError):
    """Malformed binary or text artifact file."""
