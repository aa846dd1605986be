"""Exception hierarchy shared by all modules."""


class PrefObfError(Exception):
    """Base class for every error raised by this package."""


class ParseError(PrefObfError, ValueError):
    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class EmptyInputError(PrefObfError, ValueError):
    pass


class CoverageError(PrefObfError, ValueError):
    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join(map(str, self.missing[:20]))
        more = "" if len(self.missing) <= 20 else f" (+{len(self.missing) - 20} more)"
        super().__init__(f"users without an attribute label: {shown}{more}")


class LabelCardinalityError(PrefObfError, ValueError):
    pass


class EmptyCoreError(PrefObfError, ValueError):
    pass


class SplitInfeasibleError(PrefObfError, ValueError):
    pass


class DimensionError(PrefObfError, ValueError):
    pass


class EmptyGroupError(PrefObfError, ValueError):
    pass


class UndefinedScoreError(PrefObfError, ValueError):
    pass


class ProfileEmptiedError(PrefObfError, ValueError):
    pass


class DivergenceError(PrefObfError, ArithmeticError):
    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"non-finite training loss {loss!r} at epoch {epoch}")


class DegenerateLabelsError(PrefObfError, ValueError):
    pass
