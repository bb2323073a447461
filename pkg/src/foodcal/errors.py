"""Exception types shared across the pipeline."""


class FoodcalError(Exception):
    """Base class for all pipeline errors."""


class MalformedRecordError(FoodcalError):
    """A data file failed to parse; carries file and line context."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f" [{path}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(message + where)


class MissingCalibrationError(FoodcalError):
    """No calibration-object detection available in a view."""


class DegenerateSegmentationError(FoodcalError):
    """Segmentation converged to an empty or unusable foreground."""


class MissingDataError(FoodcalError):
    """A required parameter (density, energy, params row) is absent."""


class DegenerateFitError(FoodcalError):
    """Fit denominator sums to zero; no parameter can be estimated."""
