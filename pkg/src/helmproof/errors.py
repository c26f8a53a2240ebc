"""Exception taxonomy shared across the toolkit.

Every error raised on purpose by this package derives from HelmproofError,
so callers can catch one type at the CLI boundary and map it to an exit
code. Parse errors carry a source location; evaluation errors carry the
offending expression where that helps diagnosis.
"""


class HelmproofError(Exception):
    """Base class for all errors raised by this package."""


class DuplicateNameError(HelmproofError):
    """A state-space declaration reuses a lens name."""


class ZeroDimensionError(HelmproofError):
    """A matrix shape with a zero row or column count."""


class UnknownLensError(HelmproofError):
    """Lookup of a lens name that was never declared."""


class ShapeMismatchError(HelmproofError):
    """Operands or assignment sides with incompatible shapes or sorts."""


class IndexOutOfRangeError(HelmproofError):
    """Element access outside a matrix lens's bounds."""


class EvalError(HelmproofError):
    """Evaluation failed; subclasses say why."""


class DivByZeroError(EvalError):
    """Division with a zero denominator."""


class DomainError(EvalError):
    """A partial function applied outside its domain (acos, sqrt)."""


class NonFiniteStateError(HelmproofError):
    """Integration produced NaN or infinity in the continuous state."""


class IoError(HelmproofError):
    """A required input file is missing or unreadable."""


class ParseError(HelmproofError):
    """Source text rejected; includes a line and column."""

    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"{message} (line {line}, column {col})"
        super().__init__(message)


class RaggedRowsError(ParseError):
    """Matrix literal whose rows have unequal lengths."""


class TestFailedError(HelmproofError):
    """A test statement's predicate evaluated false during execution."""


class UnsupportedNodeError(HelmproofError):
    """An expression node with no Lie-derivative rule."""


class UnsupportedPredicateError(HelmproofError):
    """A predicate form the differential rules cannot handle."""


class NotDifferentiableError(HelmproofError):
    """Differential induction applied to a non-differentiable candidate."""


class MissingInvariantError(HelmproofError):
    """A loop rule was applied without an invariant to carry."""


class UnknownVcError(HelmproofError):
    """A verification-condition id absent from the session."""


class UnknownProgramError(HelmproofError):
    """A program or predicate name absent from the model."""


class UnsupportedTheoryError(HelmproofError):
    """A formula outside the exportable SMT fragment."""


class SimStuckError(HelmproofError):
    """The control loop stopped making time progress."""


class DomainViolationError(HelmproofError):
    """An evolution domain failed under the error-on-violation policy."""
