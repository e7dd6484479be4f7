class CarbonTraceError(Exception):
    """Base class for all errors raised by carbontrace."""


class CaseFormatError(CarbonTraceError):
    """Case or dispatch file could not be parsed."""


class ValidationError(CarbonTraceError):
    """Input data violates a structural invariant."""


class InfeasibleDispatchError(CarbonTraceError):
    """No dispatch satisfies demand under generation and line limits."""

    def __init__(self, message: str, load_factor: float | None = None):
        super().__init__(message)
        self.load_factor = load_factor


class CycleError(CarbonTraceError):
    """A flow graph contains a directed cycle; ``cycle`` lists its bus ids."""

    def __init__(self, cycle: list[int]):
        super().__init__("directed cycle in flow graph: " + " -> ".join(map(str, cycle + cycle[:1])))
        self.cycle = cycle


class InvariantError(CarbonTraceError):
    """A computed result failed a conservation or consistency check."""
