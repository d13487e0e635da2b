"""Exception hierarchy for densegame.

Everything raised on purpose derives from :class:`DenseGameError`, so the CLI
can turn it into exit code 2 without catching unrelated bugs.
"""


class DenseGameError(Exception):
    """Base class for all densegame failures."""


class DimensionMismatchError(DenseGameError, ValueError):
    pass


class NonHermitianError(DenseGameError, ValueError):
    pass


class InvalidStateError(DenseGameError, ValueError):
    """A density matrix, profile, amplitude or coefficient vector is invalid."""


class NotDiagonalError(DenseGameError, ValueError):
    """Classical-mode operation received a non-diagonal operator."""


class NotCommutingError(DenseGameError, ValueError):
    pass


class DiagonalizationError(DenseGameError):
    """Numerical failure while building a common eigenbasis."""


class EntangledBasisError(DiagonalizationError):
    """The common eigenbasis does not split into per-player bases."""


class SizeLimitError(DenseGameError, ValueError):
    pass


class GameFileError(DenseGameError):
    """Game file could not be parsed or validated.

    ``line``/``column`` are set for syntax errors, ``field`` for schema and
    invariant violations.
    """

    def __init__(
        self,
        message: str,
        path: str | None = None,
        line: int | None = None,
        column: int | None = None,
        field: str | None = None,
    ):
        self.message = message
        self.path = path
        self.line = line
        self.column = column
        self.field = field
        super().__init__(self.describe())

    def describe(self) -> str:
        where = self.path or "<game>"
        if self.line is not None:
            where = f"{where}:{self.line}:{self.column}"
        if self.field:
            where = f"{where} [{self.field}]"
        return f"{where}: {self.message}"
