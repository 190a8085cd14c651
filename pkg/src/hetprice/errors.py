"""Exception hierarchy shared by every module.

The CLI maps :class:`ValidationError` to exit code 2 and
:class:`InfeasibleError` to exit code 3.
"""


class HetpriceError(Exception):
    """Base class for all package errors."""


class ValidationError(HetpriceError, ValueError):
    """Input violates a documented bound or schema rule."""

    def __init__(self, message, field=None, task_id=None):
        self.field = field
        self.task_id = task_id
        where = []
        if task_id is not None:
            where.append(f"task {task_id!r}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class InsufficientPathsError(HetpriceError, ValueError):
    """An estimate needs at least two paths."""


class DegenerateModelError(HetpriceError, ValueError):
    """Latency fit produced a non-positive per-path cost."""


class MissingModelError(HetpriceError, KeyError):
    """No latency model for a (platform, task) pair."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class InstanceTooLargeError(HetpriceError, ValueError):
    """Brute-force search refused: instance exceeds the exhaustive regime."""


class InfeasibleError(HetpriceError):
    """A target cannot be met (path count overflow, no frontier point under a bound)."""


class NoFeasiblePointError(InfeasibleError):
    """Every frontier point exceeds the requested latency bound."""
