"""Exception hierarchy shared across the package."""


class HfflError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(HfflError, ValueError):
    """Invalid configuration or argument combination."""


class FormatError(HfflError, ValueError):
    """Malformed on-disk data (IDX files, checkpoints, fixtures)."""


class CapacityError(HfflError, ValueError):
    """A request needs more data or more players than is available."""

    def __init__(self, message: str, required: int | None = None, available: int | None = None):
        super().__init__(message)
        self.required = required
        self.available = available


class ShapeError(HfflError, ValueError):
    """Array dimensions disagree with an architecture or with each other."""


class ParticipantError(HfflError, RuntimeError):
    """A federation participant could not perform its local update."""


class AggregationError(HfflError, ValueError):
    """Parameter vectors handed to the coordinator cannot be averaged."""


class PromotionError(HfflError, ValueError):
    """An agent cannot be moved to the requested contribution level."""


class DomainError(HfflError, ValueError):
    """Numeric argument outside the domain of a bound formula."""


class SessionError(HfflError, RuntimeError):
    """A federation session aborted; carries the failing round index."""

    def __init__(self, message: str, round_index: int, level: int | None = None):
        super().__init__(message)
        self.round_index = round_index
        self.level = level
