"""Exception hierarchy shared by all modules."""


class FinslerError(Exception):
    """Base class for every error raised by ffc."""


class ParseError(FinslerError):
    """Syntax error in an expression; ``offset`` is a byte offset into the UTF-8 text."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)


class DomainError(FinslerError):
    """An expression evaluated to NaN/inf (log of nonpositive, sqrt of negative, ...)."""


class SingularFrame(FinslerError):
    pass


class NullDirection(FinslerError):
    """L(theta) vanishes (or nearly so); the formulas divide by L."""


class NotHomogeneous(FinslerError):
    pass


class RankUnstable(FinslerError):
    """The numerical rank of the Hessian is ambiguous at the requested tolerance."""


class BlockSingular(FinslerError):
    pass


class NotBlockForm(FinslerError):
    pass


class NotRegular(FinslerError):
    pass


class StepFailure(FinslerError):
    pass


class TooFewSamples(FinslerError):
    pass


class ConfigError(FinslerError):
    pass
