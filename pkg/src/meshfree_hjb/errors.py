"""Exception types shared across the package.

Input validation failures raise plain ``ValueError`` (or a subclass below);
numerical failures raise ``ConvergenceError``.  The CLI maps these onto
distinct exit codes.
"""


class DegenerateMeshError(ValueError):
    """Mesh contains coincident points, so the separation distance is zero."""


class CapacityError(ValueError):
    """A generator would produce more nodes than the configured cap."""


class ConvergenceError(RuntimeError):
    """An iterative or linear solve failed to reach its tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class TunerError(RuntimeError):
    """Every candidate shape parameter failed to produce a value function."""
