"""Exception hierarchy.

Structural misuse (wrong space, bad config) is separated from numerical
failure (non-convergence, rank collapse) so the CLI can map them to
distinct exit codes.
"""

from __future__ import annotations

import numpy as np


class LevyflatError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(LevyflatError):
    """Operands live on different grids or have incompatible shapes."""


class ConfigError(LevyflatError):
    """Invalid run configuration (unknown key, bad value, bad file)."""


class NumericalError(LevyflatError):
    """A numerical procedure failed (rank collapse, diverging quadrature, ...)."""


class DegenerateChartError(NumericalError):
    """Chart Jacobian lost full column rank at an evaluation point."""


class DomainExitError(NumericalError):
    """An iterate left the chart's coordinate box."""


class ConvergenceError(NumericalError):
    """Gauss-Newton (or a similar iteration) did not reach its stopping test.

    Carries the last iterate so callers can still report a distance bound.
    """

    def __init__(self, message: str, last_y: np.ndarray | None = None,
                 last_dist: float = float("nan")):
        super().__init__(message)
        self.last_y = last_y
        self.last_dist = last_dist
