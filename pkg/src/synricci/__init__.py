"""Synthetic Ricci curvature bounds and isometry-group counts on finite metric measure spaces."""

__version__ = "0.1.0"

from .bochner import (  # noqa: E402
    ConstantsReport,
    GeometryBudget,
    bishop_gromov_packing,
    lemma41_constants,
    lemma42_delta,
    smallness_check,
    theorem15_bound,
    theorem17_delta,
)
from .curvature import (  # noqa: E402
    SturmBounds,
    ThetaEstimate,
    ThetaStar,
    beta_distortion,
    cd_convexity_check,
    rho_gamma,
    ricci_infty,
    ricci_N,
    sigma_gamma,
    sturm_bounds,
    theta_plus,
    theta_star,
)
from .heat import HeatState, WittenOperator, build_witten, contraction_curve, entropy, heat_flow  # noqa: E402
from .isometry import (  # noqa: E402
    DisplacementProfile,
    IsometryGroup,
    IsometryPermutation,
    covering_number,
    displacement,
    enumerate_isometries,
    injection_map,
    pigeonhole_bound,
    rigidity_scan,
)
from .mms import FiniteMMS, GeometryError, ModelManifold, dirac, discretize, geodesic, validate  # noqa: E402
from .transport import Coupling, check_coupling, displacement_interpolate, w2_entropic, w2_exact  # noqa: E402
