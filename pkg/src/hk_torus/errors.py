"""Exception types shared across the package."""


class HKTorusError(Exception):
    """Base class for every error raised by this package."""


class NonFinite(HKTorusError):
    """A coordinate was NaN or infinite."""


class NonPositivePerimeter(HKTorusError):
    """The circle perimeter must be a positive finite real."""


class PerimeterMismatch(HKTorusError):
    """Two points from circles of different perimeter were combined."""


class InvalidN(HKTorusError):
    """The number of unrolled copies must be an integer >= 4."""


class CutPresent(HKTorusError):
    """The operation requires a configuration without a cut."""


class RadiusTooLarge(HKTorusError):
    """The operation requires the radius to be below one sixth of the perimeter."""


class WrongKind(HKTorusError):
    """A matrix of a different kind was supplied."""


class NonConsecutive(HKTorusError):
    """The two states are not one time step apart."""


class HorizonTooShort(HKTorusError):
    """The trace does not extend far enough for the requested check."""


class StaleT0(HKTorusError):
    """The influence graph changes after the claimed stabilization time."""


class InsufficientDecayData(HKTorusError):
    """Fewer than the minimum number of decaying steps are available."""


class NoNewLink(HKTorusError):
    """No link was added between the two graphs."""


class AllMerged(HKTorusError):
    """Every agent occupies the same point; the construction is degenerate."""


class TraceCorrupt(HKTorusError):
    """A trace file could not be parsed against the expected schema."""


class UnknownCheck(HKTorusError):
    """An unrecognized check name was requested."""


class ConfigInvalid(HKTorusError):
    """A run configuration failed validation.

    Carries a mapping from field name to a human readable message.
    """

    def __init__(self, errors: dict):
        self.errors = dict(errors)
        super().__init__("; ".join(f"{k}: {v}" for k, v in sorted(self.errors.items())))
