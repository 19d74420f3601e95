"""Exception types shared across the package."""


class ExpforgeError(Exception):
    """Base class for all package-specific errors."""


class InputError(ExpforgeError):
    """Malformed user input: unknown symbol labels, mismatched sequence lengths."""


class ConfigError(ExpforgeError):
    """Invalid model configuration. Carries one message per offending field."""

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


class ResourceCapError(ExpforgeError):
    """An enumeration or grid would exceed the configured size cap."""


class InternalConsistencyError(ExpforgeError):
    """A computed result violates an identity that must hold up to grid slack."""
