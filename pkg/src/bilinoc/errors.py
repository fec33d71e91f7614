"""Exception types shared across the package.

Everything derives from BilinocError so callers can catch broadly; the CLI
maps subclasses onto exit codes (config errors vs numerical failures vs
non-convergence).
"""

from __future__ import annotations


class BilinocError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(BilinocError, ValueError):
    """Array shapes are inconsistent with the declared system dimensions."""


class OutOfRange(BilinocError, ValueError):
    """A query time lies outside the grid interval."""


class BadSpec(BilinocError, ValueError):
    """A problem or grid specification is malformed."""


class ConfigError(BilinocError, ValueError):
    """A run configuration file failed validation."""


class BadInitialTrajectory(BilinocError, ValueError):
    """A user-supplied initial trajectory does not meet the boundary conditions."""


class DimensionTooLarge(BilinocError, ValueError):
    """Problem size exceeds what a dense method is allowed to attempt."""


class NonFiniteState(BilinocError, ArithmeticError):
    """An integration produced NaN or Inf."""


class FiniteEscape(NonFiniteState):
    """A Riccati backward pass blew up before reaching t = 0."""


class NotControllable(BilinocError, ArithmeticError):
    """The endpoint map (or Gramian) is singular; the frozen system cannot
    reach the target."""


class TargetNotReachable(BilinocError, ArithmeticError):
    """The target lies outside the numerically resolvable range of the
    ensemble input-to-state operator."""


class IterationFailure(BilinocError, RuntimeError):
    """Base for iteration-level failures; carries the per-iteration records."""

    def __init__(self, message: str, records=None):
        super().__init__(message)
        self.records = list(records) if records is not None else []


class NotConverged(IterationFailure):
    """The iteration hit max_iter without meeting the stopping criteria."""


class Diverged(IterationFailure):
    """Successive iterates moved apart for too many consecutive steps."""


class OracleDiverged(BilinocError, RuntimeError):
    """The shooting oracle's Newton iteration failed to converge."""
