"""Exception hierarchy shared by all railpf modules."""


class RailPFError(ValueError):
    """Base class for every error raised by railpf."""


class TooFewPoints(RailPFError):
    pass


class NonMonotoneParameter(RailPFError):
    pass


class OutOfRange(RailPFError):
    pass


class DegenerateGeometry(RailPFError):
    pass


class OutOfMapRange(RailPFError):
    """A query fell outside the mapped track.

    Carries the queried distance and the map bounds so callers can tell
    a particle that left the track from a programming error.
    """

    def __init__(self, d, d_min, d_max):
        self.d = d
        self.d_min = d_min
        self.d_max = d_max
        super().__init__(f"distance {d!r} outside map range [{d_min}, {d_max}]")


class WindowTooShort(RailPFError):
    pass


class PriorOutsideMap(RailPFError):
    pass


class FilterDivergence(RailPFError):
    """All particle weights vanished and no GNSS fix was available to recover."""


class DegenerateSet(RailPFError):
    pass


class InvalidSpec(RailPFError):
    """Scenario specification error; ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class ProfileMismatch(RailPFError):
    pass


class AlignmentGap(RailPFError):
    pass


class EmptySeries(RailPFError):
    pass


class AllWeightsZero(RailPFError):
    """Every particle received zero likelihood in one update."""


class NoNearbyTrack(RailPFError):
    """No mapped track within the map-matching gate."""


class CsvFormatError(RailPFError):
    """Malformed or unreadable CSV input; the message names file and line."""


class ConfigError(RailPFError):
    """Unknown key or bad value in a run configuration file."""
