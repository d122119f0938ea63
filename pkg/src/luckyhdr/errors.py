"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid argument value or mismatched shapes."""


class DegenerateInputError(ValueError):
    """Input is structurally valid but carries no usable signal (e.g. all-zero HDR source)."""


class FormatError(ValueError):
    """Malformed file content (bad magic, truncation, checksum mismatch)."""


class WeightIncompatibilityError(FormatError):
    """Weight arrays do not match the network architecture they are applied to."""


class DeviceLimitError(RuntimeError):
    """Exposure control cannot satisfy its constraints within device limits."""
