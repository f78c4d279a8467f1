"""Exception hierarchy shared by every module of the toolkit."""


class MriMotionError(Exception):
    """Base class for all toolkit errors."""


class AllZeroVolume(MriMotionError):
    pass


class FormatError(MriMotionError):
    pass


class DimMismatch(MriMotionError):
    pass


class EmptyRegion(MriMotionError):
    pass


class DegenerateBackground(MriMotionError):
    pass


class SliceTooSmall(MriMotionError):
    pass


class TooFewSamples(MriMotionError):
    pass


class ShapeUnderflow(MriMotionError):
    pass


class NonFiniteTerm(MriMotionError):
    pass


class ZeroVariance(MriMotionError):
    pass


class DegenerateTable(MriMotionError):
    pass


class EmptyInput(MriMotionError):
    pass


class MismatchedCohorts(MriMotionError):
    pass


class InsufficientPatients(MriMotionError):
    pass


class EmptyStratum(MriMotionError):
    pass


class SingleClass(MriMotionError):
    pass


class MissingVolume(MriMotionError):
    pass


class StoreWriteError(MriMotionError):
    pass
