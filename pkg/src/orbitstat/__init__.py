"""Orbit-sampling experiments for lattice actions on homogeneous spaces."""

__version__ = "0.1.0"

from .gauge import GaugeFunction, GaugeKind, frobenius, block, height, in_ball  # noqa: F401
from .arithmetic_groups import (  # noqa: F401
    Family, GroupElement, GroupSpec, ball_count, brute_force_oracle, enumerate_ball,
)
from .spaces import SpaceModel, ModelKind, TestFunction  # noqa: F401
from .volumes import (  # noqa: F401
    StabilizerModel, fit_growth, haar_ball_volume, holder_check, skew_ball_volume, theta_estimate,
)
from .sampling import (  # noqa: F401
    OrbitAverageRequest, continuous_comparison, convergence_report, domain_restricted_affine_sum,
    orbit_average, ratio_average,
)
