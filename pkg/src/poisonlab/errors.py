class ValidationError(ValueError):
    """Input violates a documented precondition."""


class TrainingError(RuntimeError):
    """Optimisation diverged or produced non-finite values."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UnsupportedOperation(TypeError):
    """Operation is not defined for this model family or input shape."""
