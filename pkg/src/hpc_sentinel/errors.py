"""Shared exception types."""


class SentinelError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(SentinelError):
    """Invalid configuration; the message names the offending field."""


class DataError(SentinelError):
    """Malformed or inconsistent counter data."""


class DecodeError(SentinelError):
    """A serialized artifact (trace, dataset, model) could not be decoded."""


class CapabilityError(SentinelError):
    """The running platform lacks a required capability."""


class PrivilegeError(SentinelError):
    """The platform supports the operation but access was denied."""
