"""Certified bounds and exact solution for constrained maximum-entropy sampling.

Choose ``s`` of ``n`` indices maximizing ``ldet C[S,S]`` subject to
``A x <= b``.  Every upper bound the package reports comes with a dual
certificate, and the certificates drive variable fixing and an exact
branch and bound for small instances.

Set ``CMESP_DISABLE_NUMBA=1`` before import to run the pure-numpy kernels.
"""

from ._frankwolfe import PrimalResult, SolverOptions
from ._kernels import BACKEND
from .exact import (
    BoundConfig,
    SolveResult,
    branch_and_bound,
    brute_force,
    evaluate_bound,
    heuristic_lb,
    iterative_fix,
    parse_bound,
)
from .fact_bound import (
    DFactCertificate,
    FixReport,
    certify,
    comp_ddfact,
    ddfact_bound,
    fix_variables,
    gamma_s,
    solve_ddfact,
    spectral_bound,
)
from .instance import (
    Factorization,
    Instance,
    InstanceError,
    SideConstraints,
    complement,
    factorize,
    load_instance,
    random_instance,
    scale,
    schur_branch,
)
from .linx_bound import LinxParams, certify_linx, linx_bound, optimize_gamma, solve_linx
from .mixing import (
    DmixCertificate,
    MixWeights,
    certify_mix,
    comp_ddfact_component,
    ddfact_component,
    fix_mix,
    linx_component,
    optimize_alpha,
    solve_mix,
)
from .polytope import Polytope, gap_lp, linear_oracle

__version__ = "0.1.0"
