"""Bilevel optimization on Riemannian manifolds with SPD-matrix geometry."""

__version__ = "0.1.0"

from .errors import (
    BasePointMismatchError,
    ManifoldError,
    NonFiniteError,
    NotPositiveDefiniteError,
    SolverError,
    UnsupportedOperationError,
)
from .hypergrad import (
    BilevelOracles,
    EstimatorConfig,
    adjointness_check,
    aid_hypergradient,
    deterministic_neumann_hypergradient,
    exact_hypergradient,
    neumann_bias_bound,
    neumann_inverse_apply,
    neumann_partial_sum,
    stochastic_hypergradient,
    tangent_cg,
)
from .manifolds import (
    SPD,
    Euclidean,
    Manifold,
    ManifoldPoint,
    Product,
    SimplexSet,
    SmoothnessMeta,
    TangentVector,
    distance,
    exp_map,
    inner,
    log_map,
    norm,
    parallel_transport,
    product_manifold,
)
from .problems import (
    RobustInstance,
    ToyQuadratic,
    generate_gaussian_data,
    generate_spd_data,
    make_robust_instance,
    make_toy_quadratic,
    robust_oracles,
)
from .solvers import (
    IterateTrace,
    SolverConfig,
    TraceRecord,
    gradient_mapping,
    lower_gd,
    project_simplex,
    riebo,
    riesbo,
    robust_bilevel,
)
