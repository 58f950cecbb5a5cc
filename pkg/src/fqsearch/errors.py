"""Exception hierarchy shared by every fqsearch module."""


class FQSearchError(Exception):
    """Base class. ``code`` is the machine-readable tag emitted by the CLI."""

    code = "Error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class InvalidSpec(FQSearchError, ValueError):
    code = "InvalidSpec"


class CapacityExceeded(FQSearchError, MemoryError):
    code = "CapacityExceeded"


class InvalidStart(FQSearchError, ValueError):
    code = "InvalidStart"


class InvalidTarget(FQSearchError, ValueError):
    code = "InvalidTarget"


class InsufficientData(FQSearchError, ValueError):
    code = "InsufficientData"


class SeriesTooShort(FQSearchError, ValueError):
    code = "SeriesTooShort"


class NoDominantPeak(FQSearchError, ValueError):
    code = "NoDominantPeak"


class PeriodTooLongForSeries(FQSearchError, ValueError):
    code = "PeriodTooLongForSeries"


class InsufficientPoints(FQSearchError, ValueError):
    code = "InsufficientPoints"


class NonPositiveValue(FQSearchError, ValueError):
    code = "NonPositiveValue"


class EmptyInput(FQSearchError, ValueError):
    code = "EmptyInput"
