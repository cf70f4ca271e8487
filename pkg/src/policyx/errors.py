"""Exception types shared across the pipeline."""


class PolicyxError(Exception):
    """Base class for every error raised by this package."""


class MalformedFile(PolicyxError):
    """A corpus, config, or script file could not be parsed."""


class DuplicateId(PolicyxError):
    """Two corpus records share the same id."""


class InvalidGoldLabel(PolicyxError):
    """A gold annotation value is outside its closed vocabulary."""

    def __init__(self, row: int, column: str, value: object):
        super().__init__(f"row {row}: column {column!r} has invalid gold value {value!r}")
        self.row = row
        self.column = column
        self.value = value


class InsufficientGold(PolicyxError):
    """Exemplar selection needs gold annotations that are absent."""


class ConfigError(PolicyxError):
    """A configuration file is invalid."""


class TemplateError(PolicyxError):
    """A prompt template violates the placeholder contract."""


class ExemplarMismatch(PolicyxError):
    """Exemplars were supplied to, or withheld from, the wrong method."""


class BackendUnavailable(PolicyxError):
    """The completion backend failed after exhausting retries."""


class CacheMiss(PolicyxError):
    """The replay backend was asked for a request it has never seen."""


class AuthMissing(PolicyxError):
    """The HTTP backend needs a credential that is not configured."""


class NoJsonFound(PolicyxError):
    """Model output contains no parseable JSON object."""


class LengthMismatch(PolicyxError):
    """Prediction and gold sequences differ in length."""


class GoldMissing(PolicyxError):
    """An extraction references a record without a gold annotation."""


class CorpusMismatch(PolicyxError):
    """Journals being compared were produced from different corpora."""
