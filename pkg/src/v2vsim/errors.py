"""Exception hierarchy shared by the simulator modules."""


class V2VSimError(Exception):
    """Base class for every error raised deliberately by v2vsim."""


class ConfigError(V2VSimError, ValueError):
    pass


class InputError(V2VSimError, ValueError):
    pass


class TraceError(V2VSimError):
    pass


class TraceParseError(TraceError):
    """Malformed trace document. ``line`` and ``column`` are 1-based when known."""

    def __init__(self, message, line=None, column=None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line
        self.column = column


class TraceStructureError(TraceError):
    pass


class TraceAttributeError(TraceError):
    pass


class ConsistencyError(V2VSimError):
    pass


class UnknownVehicleError(V2VSimError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown vehicle"
