"""Exception hierarchy shared by all nspinn modules."""


class ContractViolation(ValueError):
    """An argument broke an operation's precondition."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""


class NumericOverflowError(NumericError):
    """A layer's pre-activation overflowed to inf/nan."""

    def __init__(self, layer: int, message: str = ""):
        self.layer = layer
        super().__init__(message or f"non-finite pre-activation in layer {layer}")


class TrainingDivergence(NumericError):
    """Optimization blew up; carries the offending iteration."""

    def __init__(self, iteration: int, message: str, checkpoint=None):
        self.iteration = iteration
        self.checkpoint = checkpoint
        super().__init__(f"iteration {iteration}: {message}")


class CheckpointFormatError(ValueError):
    """Checkpoint content does not match its declared shapes or version."""


class CheckpointParseError(CheckpointFormatError):
    """Checkpoint bytes are not valid JSON."""

    def __init__(self, offset: int, message: str):
        self.offset = offset
        super().__init__(f"malformed checkpoint at byte {offset}: {message}")
