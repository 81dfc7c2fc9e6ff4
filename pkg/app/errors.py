"""Exception hierarchy shared by the CLI and the HTTP API.

Every error carries the process exit code the CLI reports for it.
"""


class AsrError(Exception):
    exit_code = 1
    http_status = 400


class ConfigError(AsrError):
    """Invalid run configuration or command-line usage."""

    exit_code = 1


class DataError(AsrError):
    """Bad manifest, vocabulary, audio, checkpoint or utterance."""

    exit_code = 2
    http_status = 422


class UtteranceTooShortError(DataError):
    pass


class UnalignableTargetError(DataError):
    """CTC target needs more frames than the encoder produced."""


class CheckpointError(DataError):
    pass


class NumericalError(AsrError):
    """Non-finite values or a failed gradient check."""

    exit_code = 3
    http_status = 500


class ShapeError(AsrError, ValueError):
    """Tensor dimensions do not agree."""

    exit_code = 3
    http_status = 500
