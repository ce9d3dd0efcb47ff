"""Exception hierarchy shared by all cdfam modules.

Every error raised intentionally by this package derives from ``CdfamError``
so callers can catch library failures without masking programming errors.
The subclasses mirror the failure categories of the public contracts:

* ``InvalidInputError`` -- malformed arguments: dimension or domain
  mismatches, out-of-range knobs, empty batches.  Also a ``ValueError``.
* ``UnsupportedOracleError`` -- an exact oracle (log-partition, transition
  matrix, enumeration) was requested from a model that cannot provide it.
* ``DegenerateStatisticError`` -- a statistic is almost surely constant
  under the relevant distribution, so a spectral ratio is undefined.
* ``ConditionViolatedError`` -- a hypothesis behind one of the closed-form
  guarantees fails for the given constants (for example ``mu_tilde <= 0``);
  carries the failing inequality.
"""

from __future__ import annotations


class CdfamError(Exception):
    """Base class for all intentional cdfam errors."""


class InvalidInputError(CdfamError, ValueError):
    """Arguments fail a documented precondition."""


class UnsupportedOracleError(CdfamError):
    """An exact oracle was requested from a model without one."""


class DegenerateStatisticError(CdfamError):
    """The centered statistic vanishes almost surely; ratio undefined."""


class ConditionViolatedError(CdfamError):
    """A bound's hypothesis fails; ``inequality`` names the failing one."""

    def __init__(self, message: str, inequality: str | None = None):
        super().__init__(message)
        self.inequality = inequality


class ChiSquareOverflowWarning(RuntimeWarning):
    """chi-square divergence overflowed float64; +inf was returned."""


class ProjectionBoundaryWarning(RuntimeWarning):
    """More than 10% of a run's updates were clipped by the projection.

    The convergence guarantees assume the iterates live mostly in the
    interior; heavy clipping usually means the step size is too large or
    the domain too small for the configured problem.
    """
