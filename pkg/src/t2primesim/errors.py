"""Exception types shared across the package."""


class LayoutError(ValueError):
    """Phantom geometry cannot be rasterized on the requested grid."""


class SequenceError(ValueError):
    """A sequence document or IR object violates an invariant.

    ``block`` and ``field`` locate the offending item when known.
    """

    def __init__(self, message, block=None, field=None):
        where = []
        if block is not None:
            where.append(f"block {block}")
        if field is not None:
            where.append(f"field '{field}'")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)
        self.block = block
        self.field = field


class IntegrityError(ValueError):
    """Input data is structurally inconsistent (missing lines, partitions, counts)."""


class SimulationError(RuntimeError):
    """Numerical failure during simulation (non-finite state)."""
