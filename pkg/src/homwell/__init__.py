"""Desk-scale lab for heterogeneous double-well transition energies."""

from homwell.potential import (
    PotentialSpec,
    TruncatedPotential,
    make_potential,
    eval_W,
    eval_gradW_p,
    truncate,
    default_truncation_radius,
    validate_hypotheses,
)
from homwell.homogenize import HomogenizedPotential, homogenized, tabulate
from homwell.geodesic import (
    GeodesicResult,
    path_cost,
    resample_path,
    minimize_KH,
    dijkstra_oracle,
    kh_1d,
    verify_truncation_invariance,
)
from homwell.field import (
    GridField,
    EnergyReport,
    diffuse_energy,
    homogenized_energy,
    discrepancy,
    poincare_bound,
    perimeter,
    sharp_energy,
    project_to_wells,
    l1_distance,
    save_field,
    load_field,
)
from homwell.minimize import (
    TransitionProblem,
    minimize_diffuse,
    optimal_profile_1d,
    recovery_sequence,
)
from homwell.experiment import (
    ScalingSchedule,
    ExperimentRow,
    run_schedule,
    fit_scaling,
    isotropy_study,
    probe_exponent,
    emit,
)

__version__ = "0.1.0"
