"""Exception hierarchy. Every error raised on bad input derives from GLSError."""


class GLSError(ValueError):
    pass


class InvalidLabelError(GLSError):
    pass


class InvalidRateError(GLSError):
    pass


class InvalidNoiseSpecError(GLSError):
    pass


class SingularMatrixError(GLSError):
    pass


class LossDomainError(GLSError):
    pass


class EmptySubsetError(GLSError):
    pass


class DivergedTrainingError(RuntimeError):
    """Raised when the training loss becomes NaN or infinite."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")
        self.epoch = epoch
        self.loss = loss
