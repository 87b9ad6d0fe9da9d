from ububu.utils import PATH


class Error(Exception):
    pass


class ConfigError(Error):
    def __init__(self, path: PATH, msg: str):
        super().__init__(f"'{'.'.join(str(p) for p in path)}' - {str(msg)}")
        self.msg = msg
        self.path = path

    def __repr__(self):
        return f"'{'.'.join(str(p) for p in self.path)}' - {str(self.msg)}"


class ParameterError(Error, ValueError):
    pass


class DataError(Error):
    def __init__(self, msg: str, row: int = None):
        super().__init__(f"row {row}: {msg}" if row is not None else msg)
        self.msg = msg
        self.row = row


class ModelError(Error):
    pass


class NumericalError(Error, ArithmeticError):
    pass


class InstabilityError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class DiagnosticsError(Error):
    pass
