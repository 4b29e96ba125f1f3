"""Numerical workbench for Patterson-Sullivan theory of transverse subgroups of SL(d,R)."""

from .cartan import (
    CartanVector,
    GroupElement,
    LinearFunctional,
    PartialFlag,
    RootSubset,
    WeightVector,
    cartan_project,
    check_flag_convergence,
    dual_functional,
    flag_distance,
    gromov_product,
    is_transverse,
    iwasawa_cocycle,
    jordan_project,
    kappa_theta,
    omega,
    opposition,
    phi_length,
    phi_length_power_estimate,
    quint_gap_check,
    u_theta,
    weight_coords,
)
from .flow import BMSAssembly, bms_density, invariance_residual, pair_density, recurrence_diagnostic
from .hilbert import (
    BoundaryPoint,
    ConvexDomain,
    HopfVector,
    boundary_point,
    coarse_additivity_check,
    hilbert_distance,
    hopf_coordinates,
    horofunction,
    shadow_contains,
    visibility_check,
)
from .orbit import (
    GroupPreset,
    WordBall,
    compactification_distance,
    divergence_diagnostic,
    enumerate_ball,
    limit_set_sample,
)
from .patterson import (
    AtomicMeasure,
    HFunction,
    conformality_check,
    conical_mass_estimate,
    patterson_measure,
    shadow_lemma_check,
    total_variation,
    voronoi_cells,
)
from .presets import build_preset, preset_names
from .series import (
    SeriesEstimate,
    critical_exponent,
    divergence_type,
    entropy_drop_experiment,
    length_rigidity_compare,
    limit_cone_sample,
    manhattan_experiment,
    poincare_partial,
)

__version__ = "0.1.0"
