"""Exception hierarchy shared by the library and the CLI.

The CLI maps these onto exit codes: ``ParameterError`` and ``DomainError``
exit with 1, ``ConsistencyError`` with 2.
"""


class ParameterError(ValueError):
    """Mechanism or configuration parameters violate an invariant."""


class DomainError(ValueError):
    """An input lies outside the domain an operation accepts."""


class CapacityError(ValueError):
    """A request exceeds the size an exhaustive routine is willing to enumerate."""


class ConsistencyError(ArithmeticError):
    """An internal numerical invariant (e.g. PMF normalization) was breached."""


class SimulationError(RuntimeError):
    """A training run aborted; carries the round and device that failed."""

    def __init__(self, message: str, round_index: int | None = None, device_id: int | None = None):
        self.round_index = round_index
        self.device_id = device_id
        where = []
        if round_index is not None:
            where.append(f"round={round_index}")
        if device_id is not None:
            where.append(f"device={device_id}")
        suffix = f" [{', '.join(where)}]" if where else ""
        super().__init__(message + suffix)
