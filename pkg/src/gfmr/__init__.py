"""Regression of array-valued outcomes with a graph total-variation penalty.

The estimator fits one coefficient map per covariate by penalizing the total
variation of the fitted means across the edges of a neighborhood graph, so
the maps come out piecewise constant.  The solve alternates a closed-form
averaging step, a projection onto the design's row space, and per-subject
graph-fused-lasso denoising, each subproblem exact.
"""

from .baselines import ols_tv_fit, tv_denoise, tv_ols_fit
from .exceptions import (
    GflConvergenceWarning,
    GfmrError,
    RankDeficiencyError,
    ShapeMismatchError,
)
from .fused import GflConfig, GflSolution, fl1d_solve, gfl_objective, gfl_solve
from .graphs import (
    IncidenceGraph,
    add_lag_edges,
    connected_components,
    decompose_trails,
    grid_graph,
    max_degree,
    read_edge_list,
    write_edge_list,
)
from .model import (
    Dataset,
    Diagnostics,
    FitResult,
    ProjectionOperator,
    TensorShape,
    gamma_from_theta,
    matricize,
    ols_fit,
    project_rowspace,
    vectorize,
)
from .simulate import (
    BootstrapResult,
    ReplicateSummary,
    SimSpec,
    bootstrap_ci,
    gen_1d_setting1,
    gen_1d_setting2,
    gen_2d_setting1,
    gen_2d_setting2,
    generate,
    mean_deviation,
    run_replicates,
    setting_graph,
    setting_shape,
)
from .solver import (
    SolverConfig,
    fit,
    kkt_certificate,
    objective_value,
    select_lambda_cv,
)
from .theory import (
    OracleBoundSpec,
    OracleCheckResult,
    compatibility_factor,
    inverse_scaling_factor,
    oracle_bound_rhs,
    oracle_check,
    theorem_lambda,
)

__version__ = "0.1.0"

__all__ = [
    "BootstrapResult",
    "Dataset",
    "Diagnostics",
    "FitResult",
    "GflConfig",
    "GflConvergenceWarning",
    "GflSolution",
    "GfmrError",
    "IncidenceGraph",
    "OracleBoundSpec",
    "OracleCheckResult",
    "ProjectionOperator",
    "RankDeficiencyError",
    "ReplicateSummary",
    "ShapeMismatchError",
    "SimSpec",
    "SolverConfig",
    "TensorShape",
    "add_lag_edges",
    "bootstrap_ci",
    "compatibility_factor",
    "connected_components",
    "decompose_trails",
    "fit",
    "fl1d_solve",
    "gamma_from_theta",
    "gen_1d_setting1",
    "gen_1d_setting2",
    "gen_2d_setting1",
    "gen_2d_setting2",
    "generate",
    "gfl_objective",
    "gfl_solve",
    "grid_graph",
    "inverse_scaling_factor",
    "kkt_certificate",
    "matricize",
    "max_degree",
    "mean_deviation",
    "objective_value",
    "ols_fit",
    "ols_tv_fit",
    "oracle_bound_rhs",
    "oracle_check",
    "project_rowspace",
    "read_edge_list",
    "run_replicates",
    "select_lambda_cv",
    "setting_graph",
    "setting_shape",
    "theorem_lambda",
    "tv_denoise",
    "tv_ols_fit",
    "vectorize",
    "write_edge_list",
]
