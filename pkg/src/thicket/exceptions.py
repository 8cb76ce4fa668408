"""Exception types raised across the library."""


class ThicketError(Exception):
    """Base class for all library-specific errors."""


class RayParallelToPlane(ThicketError):
    """The view ray has no component along the plane normal."""


class DegenerateGeometry(ThicketError):
    """Ray/plane intersection lies at or behind the camera center."""


class PointBehindCamera(ThicketError):
    """World point has non-positive depth in the camera frame."""


class EmptyIntegral(ThicketError):
    """No integral pixel received a contribution from any camera."""


class LengthMismatch(ThicketError):
    """Per-camera sequences differ in length."""


class TooFewSamples(ThicketError):
    """Not enough valid pixels to estimate background statistics."""


class SingularCovariance(ThicketError):
    """Covariance matrix could not be inverted even after regularization."""


class EmptyTruth(ThicketError):
    """Ground truth contains no targets."""


class RasterMismatch(ThicketError):
    """Mask and ground-truth rasters have different shapes."""


class DensityUnreachable(ThicketError):
    """Requested occlusion density not reachable within the occluder cap."""
