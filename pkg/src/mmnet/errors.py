"""Exception hierarchy shared by every layer of the package."""


class MMNetError(Exception):
    """Base class for all package errors."""


class DimensionError(MMNetError, ValueError):
    """Tensor shapes are incompatible with an operation."""


class GeometryError(MMNetError, ValueError):
    """Spatial sizes are invalid (odd pooling input, empty conv output, undersized image)."""


class ConfigError(MMNetError, ValueError):
    """A configuration value is invalid or inconsistent."""


class LabelError(MMNetError, ValueError):
    """A class label lies outside ``[0, num_classes)``."""


class ProtocolError(MMNetError, ValueError):
    """The evaluation or training protocol cannot run on the given data."""


class DoubleBackwardError(MMNetError, RuntimeError):
    """``backward`` was called on a consumed graph or onto leaves holding stale grads."""


class NonFiniteError(MMNetError, FloatingPointError):
    """A NaN or Inf appeared in a forward value or a gradient."""


class CheckpointError(MMNetError, ValueError):
    """A checkpoint is malformed or was produced under a different configuration."""
