"""Matrix-free solvers for the cubic regularization subproblem.

The package turns min b^T x + 1/2 x^T A x + (rho/3) ||x||^3 into a scalar
secular root find plus a shifted CG solve, using only Hessian-vector
products: a partial eigendecomposition (shifted Lanczos) pins down the
few smallest eigenvalues, the rest of the spectrum enters through a
truncated secular equation with a surrogate eigenvalue, and the root's
distance to the true one is controlled by explicit bounds.  An adaptive
cubic-regularization outer loop, baseline solvers (Krylov subspace,
gradient descent, Cauchy point), benchmark instance generators, and a
CLI round out the library.
"""

from .arc import (
    ArcConfig,
    ArcError,
    ArcReport,
    SmoothObjective,
    arc_minimize,
    iterations_csv,
    min_hessian_eig,
)
from .crs import (
    CrsProblem,
    SolveReport,
    cauchy_point,
    gradient,
    objective,
    solve_asem,
    solve_cauchy,
    solve_exact,
    solve_gd,
    solve_krylov,
    trajectory_csv,
)
from .operators import (
    DenseOperator,
    DiagonalOperator,
    IndefiniteSystemError,
    OperatorError,
    PartialSpectrum,
    SymmetricOperator,
    dense_eigendecomposition,
    hutchinson_trace,
    lanczos_tridiagonalize,
    smallest_eigenpairs,
    solve_shifted_system,
    spectral_upper_bound,
)
from .problems import (
    InstanceSpec,
    SpecError,
    gen_instance,
    gen_spectrum,
    load_instance,
    random_orthogonal,
    rotate_instance,
    sample_goe,
    save_instance,
    semicircle_gap_bound,
    test_problem,
)
from .secular import (
    DegenerateRootError,
    HardCaseError,
    Mu2UndefinedError,
    SecularError,
    SecularModel,
    build_model,
    eval_secular,
    find_root,
    root_gap_bound,
    sigma_upper_bound,
)

__version__ = "0.1.0"

__all__ = [
    "ArcConfig", "ArcError", "ArcReport", "SmoothObjective", "arc_minimize",
    "iterations_csv", "min_hessian_eig",
    "CrsProblem", "SolveReport", "cauchy_point", "gradient", "objective",
    "solve_asem", "solve_cauchy", "solve_exact", "solve_gd", "solve_krylov",
    "trajectory_csv",
    "DenseOperator", "DiagonalOperator", "IndefiniteSystemError",
    "OperatorError", "PartialSpectrum", "SymmetricOperator",
    "dense_eigendecomposition", "hutchinson_trace", "lanczos_tridiagonalize",
    "smallest_eigenpairs", "solve_shifted_system", "spectral_upper_bound",
    "InstanceSpec", "SpecError", "gen_instance", "gen_spectrum",
    "load_instance", "random_orthogonal", "rotate_instance", "sample_goe",
    "save_instance", "semicircle_gap_bound", "test_problem",
    "DegenerateRootError", "HardCaseError", "Mu2UndefinedError",
    "SecularError", "SecularModel", "build_model", "eval_secular",
    "find_root", "root_gap_bound", "sigma_upper_bound",
    "__version__",
]
