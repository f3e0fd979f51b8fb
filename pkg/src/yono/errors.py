"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`YonoError`,
so callers (the CLI in particular) can separate domain failures from bugs.
"""


class YonoError(Exception):
    pass


class ConfigError(YonoError):
    pass


# geometry
class ZeroVector(YonoError, ValueError):
    pass


class AntipodalAxis(YonoError, ValueError):
    pass


class InvalidSpec(YonoError, ValueError):
    pass


class InvalidCosine(YonoError, ValueError):
    pass


# prototypes / synthesis
class EmptyClass(YonoError, ValueError):
    pass


class DimensionMismatch(YonoError, ValueError):
    pass


class EmptyMemory(YonoError, ValueError):
    pass


class FormatError(YonoError, ValueError):
    """A persisted file does not match the expected binary/text layout."""


# losses / encoder
class UnknownClass(YonoError, LookupError):
    pass


class ArchitectureMismatch(YonoError, ValueError):
    pass


class ShapeMismatch(YonoError, ValueError):
    pass


class StaleCache(YonoError, RuntimeError):
    pass


class DuplicateClass(YonoError, ValueError):
    pass


class ClassCollision(YonoError, ValueError):
    pass


# metrics
class MissingTestSet(YonoError, ValueError):
    pass


class IncompleteMatrix(YonoError, ValueError):
    pass


class TooFewTasks(YonoError, ValueError):
    pass


# datasets
class IndivisibleClasses(YonoError, ValueError):
    pass


class EmptyDataset(YonoError, ValueError):
    pass


class ParseError(YonoError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
