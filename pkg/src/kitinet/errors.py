"""Exception types shared across the package."""


class KitinetError(Exception):
    pass


class NonDivisibleDimension(KitinetError, ValueError):
    pass


class NonFiniteInput(KitinetError, ValueError):
    pass


class StaleReport(KitinetError, ValueError):
    pass


class StaleTape(KitinetError, ValueError):
    pass


class InvalidConfig(KitinetError, ValueError):
    pass


class DivergenceDetected(KitinetError, RuntimeError):
    """Training loss became NaN or infinite."""

    def __init__(self, epoch, loss):
        super().__init__(f"loss became non-finite at epoch {epoch}: {loss!r}")
        self.epoch = epoch
        self.loss = loss
