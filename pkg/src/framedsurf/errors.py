"""Exception hierarchy shared by every module of the package."""


class FramedSurfaceError(Exception):
    """Base class for all package errors."""


class FrameError(FramedSurfaceError, ValueError):
    """A frame is not orthonormal, or a surface is not tangent to its normal."""


class ExprSyntaxError(FramedSurfaceError, SyntaxError):
    """Raised by the expression parser.

    ``offset`` is the 1-based character position of the offending token and
    ``expected`` a short description of what the parser wanted there.
    """

    def __init__(self, message, text, offset, expected):
        super().__init__(f"{message} at offset {offset}: expected {expected}")
        self.text = text
        self.offset = offset
        self.expected = expected
        self.msg = message


class EvalError(FramedSurfaceError, ArithmeticError):
    """An expression was evaluated outside its domain (pole, negative sqrt, ...)."""

    def __init__(self, message, node=None):
        where = f" in `{node}`" if node is not None else ""
        super().__init__(message + where)
        self.node = node


class SpecError(FramedSurfaceError, ValueError):
    """A mate specification is missing a field or carries an invalid value."""


class NoThetaError(FramedSurfaceError):
    """The caustic matrix has numerical rank 2, so no kernel angle exists."""


class BranchError(FramedSurfaceError):
    """No continuous root branch could be tracked over the grid."""


class GateError(FramedSurfaceError):
    """An existence condition for a mate construction failed beyond tolerance."""


class IntegrabilityError(FramedSurfaceError):
    """Prescribed invariant fields violate the compatibility equations."""


class StepError(FramedSurfaceError):
    """Frame re-orthonormalization needed a correction larger than allowed."""


class SchemaError(FramedSurfaceError, ValueError):
    """A scene file does not follow the expected layout."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
