"""Exception types raised by the tvnormal package."""


class TVNormalError(Exception):
    """Base class for all package-specific errors."""


class InvalidChart(TVNormalError):
    """Chart parameters are invalid (non-positive axes, radius <= 0, ...)."""


class DegenerateMetric(TVNormalError):
    """The parametrization is singular at a quadrature node."""


class AntipodalPoints(TVNormalError):
    """Log map / parallel transport requested between (nearly) antipodal points."""


class LostStarShape(TVNormalError):
    """A perturbation destroyed star-shapedness or flipped the orientation."""


class FlatRegion(TVNormalError):
    """Both principal curvatures vanish where a derivative needs 1/g."""


class DegenerateCurve(TVNormalError):
    """A closed curve has (numerically) vanishing speed at a node."""


class LineSearchFailed(TVNormalError):
    """Backtracking produced no decrease within the allowed halvings."""


class NonFinite(TVNormalError):
    """A NaN or Inf showed up in a solver trace."""


class ConfigError(TVNormalError):
    """An experiment configuration file is malformed or inconsistent."""
