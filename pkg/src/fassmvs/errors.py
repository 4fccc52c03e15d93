"""Exception hierarchy shared across the package."""


class FassMvsError(Exception):
    """Base class for all errors raised by fassmvs."""


class InvalidInputError(FassMvsError, ValueError):
    """Malformed or inconsistent input data (files, arrays, camera parameters)."""


class InvalidBundleError(InvalidInputError):
    """The image bundle violates the size/ordering requirements of the sweep."""


class ConfigurationError(FassMvsError, ValueError):
    """A combination of options that cannot be executed."""


class DegenerateGeometryError(FassMvsError, ValueError):
    """Camera/plane configuration for which the sweep is undefined.

    Raised for zero baselines, epipoles coinciding with the sampled segment and
    bounding planes that would flip the orientation of a warped image.
    """
