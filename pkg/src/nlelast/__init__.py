"""Nonlocal vector calculus and linearized nonlocal elasticity."""

from .errors import (
    AdmissibilityError,
    ConfigError,
    NlelastError,
    QuadratureError,
    SolveError,
)
from .elasticity import (
    GeneralTensor,
    IsoTensor,
    bilinear_form,
    check_admissible,
    tensor_from_config,
    total_energy,
)
from .grid import Domain, Field, TorusGrid, build_domain, interpolate
from .kernels import (
    Kernel,
    limit_order,
    make_constant,
    make_fractional,
    make_table_kernel,
    make_truncated_fractional,
    q_hat,
    rescale,
)
from .operators import (
    build_stencil,
    nonlocal_divergence,
    nonlocal_gradient,
    nonlocal_laplacian,
    nonlocal_sym_gradient,
)
from .eringen import (
    EringenForm,
    EringenKernel,
    EringenReport,
    assemble_eringen_form,
    build_eringen_kernel,
    compare_forms,
    mercer_min,
    scalar_identity_gap,
)
from .localize import (
    LimitStudy,
    balanced_bump_load,
    restricted_l2_difference,
    run_horizon_to_infinity,
    run_horizon_to_zero,
    run_neumann_horizon_to_zero,
    run_s_to_one,
    smooth_sine_load,
    study_rows,
)
from .solve import (
    NullspaceInfo,
    SolveReport,
    neumann_nullspace,
    project_out_nullspace,
    solve_dirichlet,
    solve_dirichlet_strongform,
    solve_local_oracle,
    solve_neumann,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "AdmissibilityError",
    "assemble_eringen_form",
    "balanced_bump_load",
    "bilinear_form",
    "build_domain",
    "build_eringen_kernel",
    "build_stencil",
    "check_admissible",
    "compare_forms",
    "ConfigError",
    "Domain",
    "EringenForm",
    "EringenKernel",
    "EringenReport",
    "Field",
    "GeneralTensor",
    "interpolate",
    "IsoTensor",
    "Kernel",
    "limit_order",
    "LimitStudy",
    "make_constant",
    "make_fractional",
    "make_table_kernel",
    "make_truncated_fractional",
    "mercer_min",
    "neumann_nullspace",
    "NlelastError",
    "nonlocal_divergence",
    "nonlocal_gradient",
    "nonlocal_laplacian",
    "nonlocal_sym_gradient",
    "NullspaceInfo",
    "project_out_nullspace",
    "q_hat",
    "QuadratureError",
    "rescale",
    "restricted_l2_difference",
    "run_horizon_to_infinity",
    "run_horizon_to_zero",
    "run_neumann_horizon_to_zero",
    "run_s_to_one",
    "scalar_identity_gap",
    "smooth_sine_load",
    "solve_dirichlet",
    "solve_dirichlet_strongform",
    "solve_local_oracle",
    "solve_neumann",
    "SolveError",
    "SolveReport",
    "study_rows",
    "tensor_from_config",
    "TorusGrid",
    "total_energy",
]
