"""Exception hierarchy.

Every error carries a short ``code`` so the CLI can print a single
machine-parseable line (``error=<code> <message>``).
"""

from __future__ import annotations


class BarotrackError(Exception):
    code = "error"


class DegenerateInput(BarotrackError, ValueError):
    code = "degenerate_input"


class NonMonotonicTime(BarotrackError, ValueError):
    code = "non_monotonic_time"


class NotStationary(BarotrackError, ValueError):
    code = "not_stationary"


class DegenerateSpan(BarotrackError, ValueError):
    code = "degenerate_span"


class ExcessiveMotion(BarotrackError, ValueError):
    code = "excessive_motion"


class ShapeMismatch(BarotrackError, ValueError):
    code = "shape_mismatch"


class LengthMismatch(BarotrackError, ValueError):
    code = "length_mismatch"


class NonFiniteLoss(BarotrackError, FloatingPointError):
    code = "non_finite_loss"


class TooShort(BarotrackError, ValueError):
    code = "too_short"


class CorruptFile(BarotrackError, IOError):
    code = "corrupt_file"


class VersionMismatch(BarotrackError, IOError):
    code = "version_mismatch"


class BadMagic(BarotrackError, ValueError):
    code = "bad_magic"


class BadVersion(BarotrackError, ValueError):
    code = "bad_version"


class OutOfRange(BarotrackError, ValueError):
    code = "out_of_range"


class ConfigError(BarotrackError, ValueError):
    code = "config"
