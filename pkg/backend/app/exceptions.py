"""
CymbaDiff Exceptions
Error hierarchy shared by every package module
"""

from typing import Sequence


class CymbaError(Exception):
    """Base class for all CymbaDiff failures"""


class ShapeError(CymbaError, ValueError):
    """Operand shapes do not conform for an operation"""

    def __init__(self, op: str, *shapes: Sequence[int], detail: str = ""):
        self.op = op
        self.shapes = [tuple(s) for s in shapes]
        shown = " vs ".join(str(s) for s in self.shapes)
        message = f"{op}: shape mismatch {shown}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class FormatError(CymbaError, ValueError):
    """A file on disk does not follow its declared format"""


class InvariantError(CymbaError, ValueError):
    """A domain value violates one of its invariants"""


class ConfigError(CymbaError, ValueError):
    """Run configuration is invalid"""


class NumericalError(CymbaError, ArithmeticError):
    """A computation produced a non-finite or out-of-tolerance result"""


class CheckpointError(CymbaError, RuntimeError):
    """A checkpoint is missing, corrupt or out of stage order"""
