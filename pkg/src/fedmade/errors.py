class FedMadeError(Exception):
    """Base class; ``category`` doubles as the CLI exit-code label."""

    category = "error"
    exit_code = 1


class ConfigError(FedMadeError, ValueError):
    category = "config"
    exit_code = 2


class SchemaError(FedMadeError, ValueError):
    category = "data"
    exit_code = 3


class NumericalError(FedMadeError, ArithmeticError):
    category = "numerical"
    exit_code = 4


class AggregationError(FedMadeError, ValueError):
    category = "aggregation"
    exit_code = 4


class ReportError(FedMadeError, OSError):
    category = "io"
    exit_code = 5
