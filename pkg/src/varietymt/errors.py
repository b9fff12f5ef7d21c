"""Exception hierarchy shared by every pipeline stage."""


class VarietyMTError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 2


class ConfigurationError(VarietyMTError):
    exit_code = 1


class DataError(VarietyMTError):
    exit_code = 2


class AlignmentError(DataError):
    pass


class ContaminationError(DataError):
    def __init__(self, message, pairs=()):
        super().__init__(message)
        self.pairs = list(pairs)


class EmptyDataError(DataError):
    pass


class DoubleTagError(DataError):
    pass


class VocabError(DataError):
    pass


class LengthError(DataError):
    pass


class UndefinedMetricError(DataError):
    pass


class FormatError(DataError):
    pass


class NumericError(VarietyMTError):
    exit_code = 3
