"""Exception hierarchy shared by every stage of the pipeline."""


class VesselTrackError(Exception):
    """Base class for all errors raised by vesseltrack."""


class SeedOutsideImage(VesselTrackError, ValueError):
    pass


class DimensionMismatch(VesselTrackError, ValueError):
    pass


class ImageTooSmall(VesselTrackError, ValueError):
    pass


class BadKernel(VesselTrackError, ValueError):
    pass


class TooFewBoundaryPoints(VesselTrackError):
    pass


class TooFewPoints(VesselTrackError, ValueError):
    pass


class DegenerateConfiguration(VesselTrackError):
    pass


class EllipseTooSmall(VesselTrackError):
    pass


class NumericalBlowup(VesselTrackError, FloatingPointError):
    pass


class NoZeroCrossing(VesselTrackError):
    pass


class SingularInnovation(VesselTrackError, ArithmeticError):
    pass


class NoRootsInRegion(VesselTrackError):
    pass


class TrackingLost(VesselTrackError):
    """Neither the EKF seed nor the cluster seed yields a segmentation."""

    def __init__(self, message, frame_index=None):
        super().__init__(message)
        self.frame_index = frame_index


class SelfIntersectingContour(VesselTrackError, ValueError):
    pass


class BothEmpty(VesselTrackError, ValueError):
    pass


class EmptyContour(VesselTrackError, ValueError):
    pass


class EmptyMask(VesselTrackError, ValueError):
    pass


class VesselOutOfBounds(VesselTrackError, ValueError):
    pass


class MixedDimensions(VesselTrackError):
    pass


class UnsupportedPixelFormat(VesselTrackError):
    pass


class EmptyDirectory(VesselTrackError):
    pass


class IoFailure(VesselTrackError, OSError):
    pass


class ConfigError(VesselTrackError, ValueError):
    pass
