"""Monte-Carlo wave optics and closed-form theory for photon pairs
generated by a scattered pump and re-scattered by a thin dynamic diffuser.
"""

from .core import (
    ComplexField,
    ConfigError,
    DiffuserSpec,
    EnsembleSpec,
    GeometrySpec,
    PumpSpec,
    TransverseGrid,
    Variant,
    make_grid,
    realization_seed,
)
from .waveoptics import (
    DiffuserMask,
    apply_mask,
    fresnel_propagate,
    mask_at_2omega,
    synthesize_diffuser,
)
from .engine import (
    CorrelationCurve,
    CorrelationMap,
    RegimeWarning,
    ScatterConfig,
    biphoton_cut,
    config_from_dimensionless,
    detection_mode_at_crystal,
    ensemble_average_cut,
    ensemble_average_map,
    pump_at_crystal,
)
from .theory import (
    TheoryParams,
    f_2omega,
    f_omega,
    gamma_minus,
    gamma_minus_parts,
    gamma_plus,
    theory_background,
    theory_curve,
    theory_peak_width,
    theory_width_max_location,
)
from .analysis import (
    SweepResult,
    enhancement_ratio,
    fit_envelope_width,
    fwhm,
    normalize_pair,
    subtract_background,
    sweep_z,
)

__version__ = "0.1.0"
