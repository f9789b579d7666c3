"""
Exceptions shared across the pipeline.

Plain argument errors (bad ratios, empty inputs, shape mismatches) are raised
as ValueError directly; the classes here carry extra context that callers
(mostly the CLI) inspect.
"""


class PipelineError(Exception):
    pass


class DatasetError(PipelineError, ValueError):
    """A corpus line could not be turned into a TweetRecord.

    Attributes:
        line_number: 1-based line number in the source stream, or None.
        value: the offending label value for vocabulary errors, or None.
    """

    def __init__(self, message, line_number=None, value=None):
        if line_number is not None:
            message = "line {}: {}".format(line_number, message)
        super().__init__(message)
        self.line_number = line_number
        self.value = value


class TransportError(PipelineError):
    """Network, timeout or HTTP failure talking to a completion endpoint.

    Distinct from an invalid response: the endpoint never produced text.
    """

    def __init__(self, message, endpoint=None, status=None):
        super().__init__(message)
        self.endpoint = endpoint
        self.status = status


class MissingSampleError(PipelineError, KeyError):
    def __init__(self, sample_id, where="truths"):
        super().__init__("sample {!r} missing from {}".format(sample_id, where))
        self.sample_id = sample_id

    def __str__(self):
        return self.args[0]


class NonFiniteLossError(PipelineError, FloatingPointError):
    pass


class ConfigError(PipelineError):
    """Unreadable or inconsistent configuration file or flags."""
