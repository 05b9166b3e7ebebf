"""Exception hierarchy. Every error carries a machine-readable ``kind``."""


class CemfError(Exception):
    kind = "error"

    def to_dict(self):
        return {"error": self.kind, "message": str(self)}


class ParseError(CemfError):
    kind = "parse_error"

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)

    def to_dict(self):
        d = super().to_dict()
        d.update(path=None if self.path is None else str(self.path), line=self.line)
        return d


class EmptyDatasetError(CemfError):
    kind = "empty_dataset"


class ParameterError(CemfError, ValueError):
    kind = "parameter_error"


class SolverError(CemfError, ArithmeticError):
    kind = "solver_error"
