"""Exception hierarchy shared across the package."""


class QuantbessError(Exception):
    """Base class for all errors raised by this package."""


class DataError(QuantbessError):
    """Problem with input market data."""


class ParseError(DataError):
    """Malformed CSV row; carries the 1-based line number."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class GapError(DataError):
    """More than one consecutive hour missing from the raw data."""


class InsufficientDataError(DataError):
    """Dataset or window too short for the requested operation."""


class CalibrationError(QuantbessError):
    """Point-model calibration failed (rank deficiency after fallback etc.)."""


class FitError(QuantbessError):
    """Distribution fit failed (degenerate sample or non-convergence)."""


class SolverError(QuantbessError):
    """Quantile-regression solver failed."""


class ConfigError(QuantbessError):
    """Invalid backtest configuration; carries all problems at once."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class BacktestStageError(QuantbessError):
    """Failure inside the rolling backtest; carries day index and stage name."""

    def __init__(self, day, stage, cause):
        super().__init__(f"day {day} [{stage}]: {cause}")
        self.day = day
        self.stage = stage


class StateInvariantError(QuantbessError):
    """Battery level left {0, 1, 2} -- indicates a bug, not a data problem."""
