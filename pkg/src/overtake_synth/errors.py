"""Exception types raised across the package."""


class OvertakeSynthError(Exception):
    """Base class for all package errors."""


class OutOfRoad(OvertakeSynthError, ValueError):
    pass


class BadLane(OvertakeSynthError, ValueError):
    pass


class UnknownCategory(OvertakeSynthError, ValueError):
    pass


class PlacementFailure(OvertakeSynthError, RuntimeError):
    pass


class BadDuration(OvertakeSynthError, ValueError):
    pass


class BadSpeed(OvertakeSynthError, ValueError):
    pass


class BadInstant(OvertakeSynthError, ValueError):
    pass


class MalformedLog(OvertakeSynthError, ValueError):
    pass


class EmptyDataset(OvertakeSynthError, ValueError):
    pass


class DegenerateColumn(OvertakeSynthError, ValueError):
    pass


class EvaluatorFailure(OvertakeSynthError, RuntimeError):
    def __init__(self, subset, cause):
        super().__init__(f"evaluator failed on subset {list(subset)!r}: {cause}")
        self.subset = tuple(subset)
        self.cause = cause


class ParseError(OvertakeSynthError, ValueError):
    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.row = row
        self.column = column


class SchemaMismatch(OvertakeSynthError, ValueError):
    pass


class ReferentialError(OvertakeSynthError, ValueError):
    pass


class ConfigError(OvertakeSynthError, ValueError):
    pass
