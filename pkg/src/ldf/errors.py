"""Exception hierarchy. The CLI maps DataError to exit code 2 and NumericError to 3."""


class LDFError(Exception):
    pass


class ConfigError(LDFError, ValueError):
    """Invalid hyperparameter or configuration value."""


class ShapeError(LDFError, ValueError):
    """Operand shapes are incompatible."""


class InvalidMaskError(LDFError, ValueError):
    """A softmax row has every position masked out."""


class ContractError(LDFError, RuntimeError):
    """An API precondition was violated (non-scalar backward, missing grad, ...)."""


class DataError(LDFError):
    """Input files are missing, malformed or insufficient."""


class ParseError(DataError, ValueError):
    def __init__(self, message, lineno=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)
        self.lineno = lineno
        self.path = path


class FormatError(ParseError):
    """Well-formed syntax but inconsistent content (e.g. vector width)."""


class SamplingError(DataError, ValueError):
    """Not enough classes or instances to build the requested episode."""


class InstanceError(DataError, ValueError):
    """A sentence is empty after tokenization."""


class NumericError(LDFError, ArithmeticError):
    """Non-finite loss during training."""
