"""Exception hierarchy.

Every exception carries a short ``category`` string; the CLI prints it as
the machine-parseable first token of its one-line error report.
"""


class FxProfileError(Exception):
    category = "error"


class ConfigError(FxProfileError, ValueError):
    category = "config"


class ValidationError(FxProfileError, ValueError):
    category = "validation"


class DataError(FxProfileError, ValueError):
    category = "data"


class WavFormatError(DataError):
    category = "wav"


class ShortfallError(DataError):
    category = "shortfall"


class ShapeError(FxProfileError, ValueError):
    """Raised by an autodiff kernel when operand shapes are incompatible."""

    category = "shape"

    def __init__(self, kernel, *shapes, detail=""):
        self.kernel = kernel
        self.shapes = shapes
        msg = f"{kernel}: incompatible shapes {', '.join(str(tuple(s)) for s in shapes)}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NonFiniteError(FxProfileError, FloatingPointError):
    category = "nonfinite"


class TrainingDiverged(FxProfileError, RuntimeError):
    category = "diverged"
