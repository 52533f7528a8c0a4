class SymfuseError(Exception):
    """Base class for all symfuse errors."""


class ShapeError(SymfuseError):
    """Operator applied to tensors with incompatible ranks or sizes."""


class DivisibilityError(SymfuseError):
    """A partitioned extent does not divide evenly at the chosen sizes."""


class NonIntegerError(DivisibilityError):
    """A dimension expression evaluated to a non-integer."""


class ConstraintError(SymfuseError):
    """A mapping assignment violates a recorded constraint."""


class DeserializeError(SymfuseError):
    """Malformed serialized graph."""


class UnsupportedOpError(SymfuseError):
    """Operator not supported by the consumer (lowering, encoding, interp)."""


class EmptyParamSpaceError(SymfuseError):
    """No parameter assignment satisfies divisibility and the memory budget."""


class WriteConflictError(SymfuseError):
    """Two blocks wrote the same output cell; the output map is invalid."""


class ResourceLimitError(SymfuseError):
    """Search exceeded its node or wall-clock budget."""
