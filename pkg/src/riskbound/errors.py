"""Exception types shared across the package."""


class InvalidInput(ValueError):
    """Input violates a documented precondition."""


class SearchError(RuntimeError):
    """A numerical search could not produce a result (empty box, rejection cap)."""


class SimulationError(RuntimeError):
    """A rollout failed; the message carries the offending draw index."""
