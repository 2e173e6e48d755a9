"""Exception hierarchy shared by all toolkit modules."""


class W2SError(Exception):
    """Base class for toolkit errors."""


class DomainError(W2SError, ValueError):
    """An argument is outside the domain an operation accepts."""


class ClipInvariantError(DomainError):
    """A frame or clip violates its structural invariants."""


class ParseError(W2SError, ValueError):
    """Malformed container data."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TruncationError(ParseError):
    """A frame payload ends before its declared size."""


class EncoderNotFoundError(W2SError, RuntimeError):
    """No encoder executable could be located."""


class EncoderError(W2SError, RuntimeError):
    """The external encoder exited with a nonzero status."""

    def __init__(self, message, returncode=None, stderr=""):
        super().__init__(f"{message}\n{stderr}".rstrip())
        self.returncode = returncode
        self.stderr = stderr


class InsufficientEnsembleError(DomainError):
    """Fewer than two teacher predictions for a video."""


class DegenerateVarianceError(DomainError):
    """Zero ensemble spread with a nonzero mean difference."""


class ModeError(DomainError):
    """A solver mode cannot handle the instance size."""


class ConvergenceError(W2SError, ArithmeticError):
    """Iterative optimization did not converge."""

    def __init__(self, message, last_iterate=None, grad_norm=None):
        super().__init__(f"{message} (gradient norm {grad_norm!r})")
        self.last_iterate = last_iterate
        self.grad_norm = grad_norm


class TrainingDivergedError(W2SError, ArithmeticError):
    """Loss became non-finite during training."""


class MissingFeaturesError(DomainError):
    """Annotations reference videos without metric vectors."""

    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__(f"missing features for {len(self.missing)} video(s): {', '.join(self.missing[:10])}")


class PreconditionError(W2SError, RuntimeError):
    """A pipeline step was invoked before its prerequisites exist."""


class ConfigError(DomainError):
    """Unknown or malformed configuration keys."""
