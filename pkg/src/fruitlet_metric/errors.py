"""Exception types raised across the pipeline.

Every failure mode callers are expected to handle has its own class so that
batch drivers can skip, log, or abort per error kind instead of string-matching
messages.
"""


class FruitletMetricError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(FruitletMetricError, ValueError):
    """A parameter violates its documented range or invariant."""


class InvalidDepthError(FruitletMetricError, ValueError):
    """A depth value is non-positive where positive depth is required."""


class BehindCameraError(FruitletMetricError, ValueError):
    """A 3D point with z <= 0 cannot be projected."""


class PoseParseError(FruitletMetricError, ValueError):
    """A pose annotation line is malformed."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class DepthFormatError(FruitletMetricError, ValueError):
    """A depth raster file has an unsupported encoding."""


class DimensionError(FruitletMetricError, ValueError):
    """Raster or array dimensions disagree with what the caller expects."""


class SchemaError(FruitletMetricError, ValueError):
    """A CSV or manifest file does not match its required schema."""


class RowValueError(FruitletMetricError, ValueError):
    """A CSV row holds an out-of-range value."""

    def __init__(self, message: str, row_number: int):
        super().__init__(f"row {row_number}: {message}")
        self.row_number = row_number


class DuplicateKeyError(FruitletMetricError, ValueError):
    """A key that must be unique appears more than once."""


class PlyWriteError(FruitletMetricError, OSError):
    """Writing a PLY file failed."""


class ConventionError(FruitletMetricError, ValueError):
    """A depth map's convention is incompatible with the operation."""


class ScaleFitError(FruitletMetricError, ValueError):
    """Scale/shift alignment could not be fit."""


class InsufficientDataError(ScaleFitError):
    """Fewer than two valid sample pairs are available for fitting."""


class RankDeficientError(ScaleFitError):
    """All relative samples are equal; scale is unidentifiable."""


class InsufficientDepthError(FruitletMetricError, ValueError):
    """Too few valid depth pixels around a keypoint to sample reliably."""


class MissingKeypointError(FruitletMetricError, ValueError):
    """A keypoint required for measurement is not labeled."""


class DegeneratePoseError(FruitletMetricError, ValueError):
    """The two keypoints coincide; the chord has no length."""


class BackendError(FruitletMetricError, RuntimeError):
    """An inference backend failed for one image."""

    def __init__(self, message: str, image_id: str = ""):
        super().__init__(f"{message} (image_id={image_id!r})" if image_id else message)
        self.image_id = image_id


class EmptyInputError(FruitletMetricError, ValueError):
    """An aggregate operation received no data."""


class UndefinedAPError(FruitletMetricError, ValueError):
    """Average precision is undefined because there are no ground truths."""


class ContractError(FruitletMetricError, ValueError):
    """A caller violated a documented precondition."""


class ConfigError(FruitletMetricError, ValueError):
    """The pipeline configuration is invalid or incomplete."""
