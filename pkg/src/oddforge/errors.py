"""Exception hierarchy shared by all oddforge modules."""


class OddError(Exception):
    """Base class for every error raised by oddforge."""


class DimensionMismatchError(OddError, ValueError):
    def __init__(self, expected, actual, what="point", row=None):
        self.expected = expected
        self.actual = actual
        self.row = row
        where = f" (row {row})" if row is not None else ""
        super().__init__(
            f"{what}{where} has dimension {actual}, expected {expected}"
        )


class ConfigError(OddError, ValueError):
    pass


class DegenerateHullError(OddError, ValueError):
    """Input points do not span a full-dimensional region."""


class UnsatisfiableConstraintError(OddError):
    """An OOD sample coincides with an anchor, so its affinity is pinned at 1."""


class NonConvergenceError(OddError):
    """OOD enforcement hit its iteration caps. ``report`` holds progress so far."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InfeasibleRegionError(OddError):
    pass


class UndefinedRSquaredError(OddError, ValueError):
    pass


class DataParseError(OddError, ValueError):
    """Input data could not be parsed. Carries the location of the failure."""

    def __init__(self, message, *, path=None, row=None, column=None, frame=None):
        self.path = path
        self.row = row
        self.column = column
        self.frame = frame
        loc = []
        if path is not None:
            loc.append(str(path))
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        if frame is not None:
            loc.append(f"frame {frame}")
        prefix = ", ".join(loc)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ModelFormatError(OddError, ValueError):
    pass


class IncompatibleVersionError(ModelFormatError):
    pass
