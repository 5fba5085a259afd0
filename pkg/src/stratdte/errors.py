"""Exception and warning types.

Three base classes partition failures by exit code in the command-line
driver: ConfigError (2), DataError (3), EstimationError (4).
"""


class StratdteError(Exception):
    """Base class for all package errors."""


class ConfigError(StratdteError):
    """Invalid configuration: bad flag values, levels, counts, names."""


class DataError(StratdteError):
    """Input data cannot support the requested analysis."""


class EstimationError(StratdteError):
    """Failure while computing an estimate from valid inputs."""


# data problems


class EmptyStratum(DataError):
    """A declared stratum contains no units."""


class DegenerateCell(DataError):
    """An (arm, stratum) cell is empty or has assignment share 0 or 1."""


class MissingColumn(DataError):
    """A required column is absent from the input file."""


class ParseError(DataError):
    """A cell in the input file failed to parse."""

    def __init__(self, row, column, message):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column!r}: {message}")


# configuration problems


class EmptyProbs(ConfigError):
    """Quantile probability list is empty or not strictly increasing in (0, 1)."""


class NotIncreasing(ConfigError):
    """Explicit threshold grid is not strictly increasing."""


class UnknownScheme(ConfigError):
    """Randomization scheme name not recognized."""


class UnsupportedArms(ConfigError):
    """Scheme restricted to two arms was given more."""


class UnknownLearner(ConfigError):
    """Learner name not recognized."""


class BadFoldCount(ConfigError):
    """Fold count outside 2..n."""


class BadLevel(ConfigError):
    """Significance level outside (0, 1)."""


class BadRepetitions(ConfigError):
    """Replication or draw count below 1."""


# estimation problems


class GridMismatch(EstimationError):
    """Two curves evaluated on different threshold grids."""


class MissingNuisance(EstimationError):
    """A required fitted nuisance component is absent."""


class ZeroBaseline(EstimationError):
    """Baseline RMSE is zero; relative reduction undefined."""


# recoverable conditions


class SmallCellWarning(UserWarning):
    """Training cell too small for the requested learner; constant fit used."""


class SingularDesignWarning(UserWarning):
    """Design matrix rank deficient; constant fit used."""
