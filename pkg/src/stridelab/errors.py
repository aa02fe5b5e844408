"""Typed errors raised across the package.

Every failure mode that callers are expected to handle gets its own class so
that CLI code and tests can match on type instead of message text.
"""


class StrideLabError(Exception):
    """Base class for all package errors."""


class ConfigError(StrideLabError):
    """Invalid or contradictory configuration; message names the key path."""


# -- skeleton / anatomy ------------------------------------------------------

class OutOfRangeHeight(StrideLabError):
    """Subject height outside the plausible (0.5 m, 2.5 m) interval."""


class IncompleteRatioTable(StrideLabError):
    """Anatomy ratio table is missing one or more skeleton edges."""


class NonPositiveDepth(StrideLabError):
    """A 3D joint with z <= 0 cannot be projected."""


# -- pose stream parsing -----------------------------------------------------

class MalformedDocument(StrideLabError):
    """Input bytes are not a valid pose stream document."""


class UnknownJoint(StrideLabError):
    """A joint name that is neither canonical nor a known alias."""


class NonMonotonicFrames(StrideLabError):
    """Frame indices or timestamps do not strictly increase."""


class MissingHeaderField(StrideLabError):
    """A required header field (e.g. fps) is absent."""


# -- optimizer ---------------------------------------------------------------

class MissingModality(StrideLabError):
    """Optimization requires both a 2D and a 3D stream."""


class FrameCountMismatch(StrideLabError):
    """Pose parameters and sequence disagree on the number of frames."""


class DegenerateInput(StrideLabError):
    """A frame with no usable joint observations in either modality."""


# -- step detection ----------------------------------------------------------

class MissingJoint(StrideLabError):
    """A joint needed to build the step signal is absent from a frame."""


class SignalTooShort(StrideLabError):
    """Fewer than three samples; extrema are undefined."""


class NoStepsDetected(StrideLabError):
    """Fewer than two honest maxima in the step signal."""


class AmbiguousWalkingDirection(StrideLabError):
    """Root travel too short to define a walking direction."""


# -- gait parameters ---------------------------------------------------------

class TooFewSteps(StrideLabError):
    """Fewer than two step events; parameters are undefined."""


# -- synthetic walker --------------------------------------------------------

class InconsistentSpec(StrideLabError):
    """Walker spec violates speed = step length x cadence / 60."""


# -- agreement statistics ----------------------------------------------------

class DegenerateVariance(StrideLabError):
    """ANOVA mean squares vanish; ICC is undefined on this table."""


class LengthMismatch(StrideLabError):
    """Paired arrays of unequal length."""


class TooFewPairs(StrideLabError):
    """Not enough paired observations for the requested statistic."""
