"""Exception hierarchy shared by every hfm module."""


class HFMError(Exception):
    """Base class for all hfm errors."""


class InvalidArgumentError(HFMError, ValueError):
    """An argument violates an operation's preconditions."""


class DegenerateInputError(InvalidArgumentError):
    """Geometric input for which the requested quantity is undefined."""


class TrainingFailure(HFMError, RuntimeError):
    """Optimization produced a non-finite objective.

    ``index`` is the epoch (alignment) or step (flow training) at which the
    divergence was detected.
    """

    def __init__(self, message, index):
        super().__init__(f"{message} (at index {index})")
        self.index = index


class FeatureFormatError(HFMError, ValueError):
    """Malformed feature or checkpoint file; ``offset`` is the byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset
