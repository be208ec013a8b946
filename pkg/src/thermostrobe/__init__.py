"""Simulator for repeated quantum measurements as ansatz-posterior transformations."""

from .ansatz import (
    AnsatzFamily,
    FactorizedAnsatz,
    GibbsAnsatz,
    PinchingAnsatz,
    RelevantSet,
    SelectiveAnsatz,
    ansatz_derivative,
    extract_params,
    factorized_ansatz,
    fit_beta,
    gibbs_expectations,
    gibbs_jacobian,
    gibbs_state,
    pinching_ansatz,
    posterior,
    qubit_beta_closed_form,
    selective_ansatz,
)
from .errors import (
    CapacityError,
    ConfigError,
    ContractError,
    DegenerateAnsatzError,
    DomainError,
    FitError,
    SingularityError,
    ThermostrobeError,
    ValidationError,
    ZeroProbabilityBranchError,
)
from .ansatz import gibbs_param_derivative
from .liouville import (
    GkslGenerator,
    Propagator,
    apply_heisenberg,
    apply_schrodinger,
    choi_matrix,
    choi_psd_check,
    propagate,
    require_density,
    to_liouvillian,
    unvec,
    vec,
)
from .matcore import (
    SIGMA_MINUS,
    SIGMA_PLUS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    dagger,
    dexp_neg,
    exp_general,
    exp_hermitian,
    frobenius,
    herm_eig,
    hermiticity_defect,
    hermitize,
    is_hermitian,
    kron,
    partial_trace,
    require_hermitian,
    require_square,
    scale_of,
)
from .models import (
    MultilevelParams,
    QubitParams,
    bosonic_gamma,
    multilevel_A_analytic,
    multilevel_B_analytic,
    multilevel_energy_observable,
    multilevel_generator,
    multilevel_rates,
    qubit_A_analytic,
    qubit_B_analytic,
    qubit_E_closed_form,
    qubit_E_stationary,
    qubit_beta_stationary,
    qubit_energy_observable,
    qubit_generator,
    qubit_rate_closed_form,
    qubit_tau,
)
from .strob import (
    InvarianceResult,
    StrobConfig,
    Trajectory,
    discrete_step,
    heat_capacity,
    integrate,
    invariant_subspace_matrix,
    ode_rhs_first_order,
    ode_rhs_second_order,
    ode_rhs_temperature,
    projector_ode_rhs,
    relevant_curvature,
    relevant_velocity,
    rk4_step,
    run_discrete,
    run_ode,
    run_ode_temperature,
    velocity_gradient,
)

__version__ = "0.1.0"
