"""Error taxonomy, shared with the consumer package so exit codes line up."""

from zerodiffusion import ConfigError, DataError

__all__ = ["ConfigError", "DataError", "AudioDecodeError"]


class AudioDecodeError(DataError):
    """A clip could not be decoded; extraction skips it and logs the reason."""
