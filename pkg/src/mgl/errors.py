"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operands, stored tensors or file payloads have incompatible shapes."""


class NumericsError(ArithmeticError):
    """A numeric contract broke: non-finite loss, failed gradient check, bad domain."""


class InvariantError(RuntimeError):
    """A structural contract was violated (non-stochastic adjacency, empty graph, ...)."""


class PnmError(OSError):
    """Malformed PPM/PGM stream."""


class CheckpointError(OSError):
    """Malformed or truncated checkpoint container."""
