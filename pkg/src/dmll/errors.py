"""Exception types shared across the package."""


class DmllError(Exception):
    """Base class for all errors raised by this package."""


class DataFormatError(DmllError):
    """A file or record does not match the expected on-disk format."""


class DimensionError(DmllError):
    """Array shapes or declared dimensions disagree."""


class NonFiniteLossError(DmllError):
    """A loss evaluation produced NaN or infinity."""

    def __init__(self, message: str, loss: float = float("nan")):
        self.loss = loss
        super().__init__(message)


class TrainingDiverged(DmllError):
    """The training loss became non-finite."""

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(
            f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}"
        )
