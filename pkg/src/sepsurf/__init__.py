"""Separating-surface toolkit for vertical motion over periodic planar
configurations: classify escape versus return, bisect the boundary
velocity f(theta), and trace it to the q = 0 plane.
"""

__version__ = "0.1.0"

from .classify import (
    DECISION_EPS,
    Classification,
    EnergyBounds,
    classify_trajectory,
    cone_test,
    e_substar_zero_curve,
    energy_bounds,
)
from .dynamics import (
    IntegratorSettings,
    StateInv,
    StateStd,
    Trajectory,
    integrate_until,
    invert_state,
    inverted_field,
    rk4_step,
    standard_field,
    uninvert_state,
    vf_fictional,
    vf_inv,
    vf_std,
)
from .errors import (
    BracketError,
    ConfigError,
    IntegrationBlowupError,
    MissingHeaderError,
    NegativeRadiusError,
    NonMonotoneGridError,
    NumericalError,
    PeriodicClosureError,
    SepsurfError,
    StepSizeError,
)
from .planar import (
    Circular,
    EllipticKeplerPair,
    PlanarConfiguration,
    RegularizedCollinearPair,
    Tabulated,
    circular_pair,
    collinear_e1,
    collinear_radius,
    kepler_pair,
    load_tabulated,
    preset,
    preset_names,
    q_mono,
    radii,
    solve_kepler,
)
from .separatrix import (
    PlaneCurve,
    ReturnMapPoint,
    SeparatrixCurve,
    SeparatrixSample,
    backward_to_plane,
    build_curve,
    find_f,
    forward_return_map,
    intersect_polylines,
    reflect_for_reversal,
)

__all__ = [name for name in dir() if not name.startswith("_")]
