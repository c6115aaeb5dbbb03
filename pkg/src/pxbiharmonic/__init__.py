"""Variable-exponent Lebesgue tools and a solver for singular p(x)-biharmonic
problems with Navier boundary conditions."""

from .discretization import NavierOperator, integrate, laplacian, weak_pairing
from .energy import (
    EnergyBreakdown,
    ValleyConstants,
    coercivity_bound,
    energy,
    energy_gradient,
    estimate_embedding_constant,
    inner_h,
    valley_constants,
)
from .exceptions import *  # noqa: F401,F403
from .exponent_field import (
    INFINITY,
    ExponentTriple,
    Grid,
    ScalarField,
    check_theorem_hypotheses,
    exponent_bounds,
    load_field,
    random_smooth_field,
    save_field,
    sobolev_critical_exponent,
)
from .minimizer import (
    NavierBiharmonicSolver,
    ProblemSpec,
    SolveResult,
    bump_profile,
    lambda_sweep,
    minimize,
    probe_basis,
    stationarity_residual,
    valley_scan,
)
from .phi_models import PhiModel, big_phi, phi, simon_gap, verify_hypotheses
from .variable_lebesgue import (
    NormResult,
    conjugate_exponent,
    holder_check,
    luxemburg_norm,
    modular,
    modular_convergence_check,
    modular_norm_relations_check,
)

__version__ = "0.1.0"
