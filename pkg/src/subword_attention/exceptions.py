"""Exception hierarchy shared across the package."""


class SubwordAttentionError(Exception):
    pass


class DatasetError(SubwordAttentionError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MalformedRow(DatasetError):
    pass


class UnknownLabel(DatasetError):
    pass


class EmptyText(DatasetError):
    pass


class TooFewSamples(SubwordAttentionError, ValueError):
    pass


class EmptyCorpus(SubwordAttentionError, ValueError):
    pass


class TargetTooSmall(SubwordAttentionError, ValueError):
    pass


class UnknownId(SubwordAttentionError, KeyError):
    pass


class VocabFormatError(SubwordAttentionError, ValueError):
    pass


class UnsegmentableWord(SubwordAttentionError, RuntimeError):
    pass


class OddDimension(SubwordAttentionError, ValueError):
    pass


class ShapeMismatch(SubwordAttentionError, ValueError):
    pass


class ConfigError(SubwordAttentionError, ValueError):
    pass


class EmptyEvalSet(SubwordAttentionError, ValueError):
    pass


class CorruptCheckpoint(SubwordAttentionError, ValueError):
    pass


class IoFailure(SubwordAttentionError, OSError):
    pass
