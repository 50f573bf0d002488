"""Exception types raised across the toolkit."""


class RegBenchError(ValueError):
    pass


class PcdError(RegBenchError):
    """Problem while parsing a point-cloud text file; carries the 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MalformedHeader(PcdError):
    pass


class CountMismatch(PcdError):
    pass


class BadRow(PcdError):
    pass


class EmptyCloud(RegBenchError):
    pass


class DegenerateCloud(RegBenchError):
    pass


class NonPositiveLeaf(RegBenchError):
    pass


class NonPositiveThreshold(RegBenchError):
    pass


class NotARotation(RegBenchError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidBounds(RegBenchError):
    pass


class NoEligiblePairs(RegBenchError):
    pass


class MalformedRecord(RegBenchError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateId(RegBenchError):
    pass


class DegenerateGeometry(RegBenchError):
    pass


class NoCorrespondences(RegBenchError):
    pass


class SolverDiverged(RegBenchError):
    pass


class TooFewPoints(RegBenchError):
    pass


class TooFewValues(RegBenchError):
    pass


class EmptyInput(RegBenchError):
    pass


class LengthMismatch(RegBenchError):
    pass


class ZeroVariance(RegBenchError):
    pass


class ManifestError(RegBenchError):
    pass


class NonFinitePointsWarning(UserWarning):
    """Emitted when a parser drops points containing NaN or Inf."""

    def __init__(self, count):
        self.count = count
        super().__init__(f"dropped {count} non-finite point(s)")
