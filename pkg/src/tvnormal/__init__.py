"""Total variation of the unit normal field on closed surfaces.

Evaluation of the functional and its relatives, shape calculus for its
derivatives, stationarity checks for spheres, and a tangent-space split
Bregman solver for TV-regularized shape optimization.
"""

from . import bregman, calculus, charts, config, fields, functionals, geometry, harmonics, sphere
from .bregman import AdmmConfig, AreaPenalty, LossTerm, SplitState, VolumePenalty, ZeroLoss
from .charts import (
    EllipsoidChart,
    PerturbedChart,
    RadialChart,
    RotatedChart,
    ScaledChart,
    SphereChart,
    build_chart,
)
from .errors import (
    AntipodalPoints,
    ConfigError,
    DegenerateCurve,
    DegenerateMetric,
    FlatRegion,
    InvalidChart,
    LineSearchFailed,
    LostStarShape,
    NonFinite,
    TVNormalError,
)
from .fields import (
    AmbientField,
    ChartNormalField,
    ConstantField,
    LinearField,
    RadialHarmonicField,
    TrigPolyField,
    rotation_field,
)
from .functionals import (
    FourierCurve,
    FunctionalValue,
    curve_total_abs_curvature,
    gauss_bonnet_residual,
    total_abs_gauss,
    total_curvature,
    tv_of_normal,
)
from .geometry import QuadratureGrid, SurfaceSamples, area, export_mesh, make_grid, sample, volume
from .sphere import (
    TangentVector,
    UnitNormal,
    exp_map,
    geodesic,
    geodesic_distance,
    log_map,
    parallel_transport,
    parallel_transport_trig,
)

__version__ = "0.1.0"
