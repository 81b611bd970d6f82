"""Exception types shared across the solver."""


class MeshError(ValueError):
    """Invalid mesh topology or geometry."""


class NonManifoldError(MeshError):
    """A surface face is shared by more than two tetrahedra."""


class MshParseError(ValueError):
    """Malformed or unsupported MSH file."""


class ConvergenceError(RuntimeError):
    """Iterative solver failed to reach the requested tolerance."""


class OperatorIOError(IOError):
    """Corrupt or incompatible compressed-operator file."""
