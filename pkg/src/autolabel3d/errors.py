"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(PipelineError):
    """Input data violates the interchange schema or a config contract."""


class MalformedMaskError(SchemaError):
    """RLE mask counts are inconsistent with the declared size."""


class InvalidTransformError(PipelineError):
    """Rigid transform with a non-unit quaternion or non-finite entries."""


class DegenerateGeometryError(PipelineError):
    """Geometric fit is underdetermined (too few, collinear, or coincident points)."""
