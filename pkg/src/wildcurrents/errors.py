"""Exception types raised across the package."""


class WildCurrentsError(Exception):
    """Base class for all package errors."""


class IterationBudgetExceeded(WildCurrentsError):
    pass


class NumericalDegeneracy(WildCurrentsError):
    pass


class ZeroMatrix(WildCurrentsError):
    pass


class DegenerateDenominator(WildCurrentsError):
    pass


class AllAtomsCoincident(WildCurrentsError):
    pass


class XiParallelE3(WildCurrentsError):
    pass


class ZeroTracer(WildCurrentsError):
    pass


class SymbolRankDeficient(WildCurrentsError):
    pass


class PackingFailure(WildCurrentsError):
    pass


class MembershipViolation(WildCurrentsError):
    pass


class GridTooCoarse(WildCurrentsError):
    pass


class ConfigParseError(WildCurrentsError):
    """Malformed configuration text; carries the offending line number."""

    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ConfigValidationError(WildCurrentsError):
    """One or more configuration values are out of range."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class IoError(WildCurrentsError):
    """Writing an output file failed."""

    def __init__(self, path, reason):
        self.path = str(path)
        super().__init__(f"{self.path}: {reason}")
