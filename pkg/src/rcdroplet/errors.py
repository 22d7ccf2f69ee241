"""Exception types shared across the package; the CLI maps each to an exit code."""
from __future__ import annotations


class InputError(ValueError):
    """Arguments violate a documented precondition (exit code 2)."""


class InfeasibleError(RuntimeError):
    """A request cannot be met, e.g. rejection sampling ran out of tries (exit code 3)."""


class InvariantError(RuntimeError):
    """An internal consistency check failed (exit code 4)."""
