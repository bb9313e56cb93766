"""Exception types raised across the package."""


class Se3DiffRegError(Exception):
    """Base class for all package errors."""


class NearCutLocus(Se3DiffRegError, ValueError):
    """Rotation angle too close to pi for a well-conditioned logarithm."""


class InvalidStepCount(Se3DiffRegError, ValueError):
    pass


class StepOutOfRange(Se3DiffRegError, IndexError):
    pass


class PerturbationResampleExceeded(Se3DiffRegError, RuntimeError):
    """Perturbation twist kept landing near the cut locus; gamma is too large."""


class EmptyCloud(Se3DiffRegError, ValueError):
    pass


class DegenerateGeometry(Se3DiffRegError, ValueError):
    """Point set is collinear or coincident; rotation is not recoverable."""


class MissingTruth(Se3DiffRegError, ValueError):
    pass


class StepFailure(Se3DiffRegError, RuntimeError):
    """A reverse step failed; ``trajectory`` holds the steps completed so far."""

    def __init__(self, message, trajectory=None, cause=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.cause = cause


class InsufficientPoints(Se3DiffRegError, ValueError):
    pass


class ParseError(Se3DiffRegError, ValueError):
    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.line = line
        self.path = path


class UnsupportedFormat(Se3DiffRegError, ValueError):
    pass


class MissingFile(Se3DiffRegError, FileNotFoundError):
    pass


class EmptyList(Se3DiffRegError, ValueError):
    pass


class ConfigError(Se3DiffRegError, ValueError):
    pass
