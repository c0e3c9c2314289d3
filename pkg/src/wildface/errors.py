"""Exception hierarchy shared by all wildface modules."""


class WildfaceError(Exception):
    """Base class for every error raised by this package."""


class PoseSchemaError(WildfaceError, ValueError):
    """A pose record does not follow the 17-joint schema."""


class PoseParseError(WildfaceError, ValueError):
    """The pose document is not valid JSON."""


class UndetectablePoseError(WildfaceError):
    """Shoulder or hip joints are missing or below the confidence threshold."""


class HeadUndetectableError(WildfaceError):
    """Ear joints are missing or below the confidence threshold."""


class DegenerateROIError(WildfaceError):
    """The head box is empty after clipping to the image."""


class ImageTooSmallError(WildfaceError, ValueError):
    pass


class EmptyStatsError(WildfaceError, ValueError):
    pass


class AmbiguousPoseError(WildfaceError, ValueError):
    """More than one pose record for the same image id."""


class MissingAssetError(WildfaceError):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("missing images for: " + ", ".join(self.missing))


class UndefinedRatioError(WildfaceError, ZeroDivisionError):
    pass


class MetadataParseError(WildfaceError, ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ManifestError(WildfaceError, ValueError):
    pass


class ShapeError(WildfaceError, ValueError):
    pass


class DegenerateBatchError(WildfaceError, ValueError):
    pass


class MissingFaceError(WildfaceError, ValueError):
    pass


class ConfigError(WildfaceError, ValueError):
    pass


class TrainingDivergedError(WildfaceError, FloatingPointError):
    pass


class GradCheckAborted(WildfaceError, FloatingPointError):
    pass


class UndefinedClassError(WildfaceError, ZeroDivisionError):
    """mA needs at least one positive and one negative example."""


class MetricInputError(WildfaceError, ValueError):
    pass
