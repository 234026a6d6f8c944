"""ADMM solver for graph-fused regression of array outcomes on scalars.

The target problem over coefficient maps Gamma (p x M) is

    min  0.5 * ||Y - X Gamma||_F^2  +  lam * sum_ij |(X Gamma D)_ij|

i.e. least squares with a total-variation penalty on every subject's fitted
mean over the penalty graph.  Rewriting it over the subject-major fitted-mean
vector theta with the constraint that theta stays in the design's per-voxel
column space splits it into three easy pieces: a closed-form quadratic step,
a projection step, and one graph-fused-lasso solve per subject.  Scaled dual
ascent ties them together, and the coefficient maps come out of the final
theta by least squares.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .exceptions import ShapeMismatchError
from .fused import GflConfig, gfl_solve
from .graphs import IncidenceGraph, incidence_apply
from .model import (
    Dataset,
    Diagnostics,
    FitResult,
    ProjectionOperator,
    gamma_from_theta,
    ols_fit,
    project_rowspace,
)


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    ``lam`` weighs the total-variation penalty; ``admm_penalty`` is the fixed
    coupling weight rho of the outer loop (no adaptive schedule); ``tol``
    bounds both the relative theta change and the normalized feasibility
    residual at convergence; the initial theta/eta/mu iterates are standard
    normal draws seeded by ``seed`` with both dual blocks starting at zero.
    ``relax`` in (0, 2) over-relaxes the consensus updates; 1 is the plain
    recursion, values around 1.5-1.8 usually cut the iteration count.
    """

    lam: float = 1.0
    admm_penalty: float = 1.0
    tol: float = 1e-4
    max_iter: int = 200
    seed: int = 0
    relax: float = 1.0
    gfl: GflConfig = field(default_factory=GflConfig)

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lam must be finite and >= 0, got {self.lam}")
        if not (np.isfinite(self.admm_penalty) and self.admm_penalty > 0):
            raise ValueError(f"admm_penalty must be positive, got {self.admm_penalty}")
        if not (0 < self.tol < 1):
            raise ValueError(f"tol must lie in (0, 1), got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if not (0.0 < self.relax < 2.0):
            raise ValueError(f"relax must lie in (0, 2), got {self.relax}")


@dataclass
class AdmmState:
    """Iterates of the outer loop: primal blocks theta/eta/mu and scaled
    duals U (feasibility) and V (fused-lasso consensus), all length n*M."""

    theta: np.ndarray
    eta: np.ndarray
    mu: np.ndarray
    U: np.ndarray
    V: np.ndarray
    k: int = 0


def init_state(nm: int, seed: int) -> AdmmState:
    """Fresh state: standard-normal primal blocks, zero duals."""
    rng = np.random.default_rng(seed)
    return AdmmState(
        theta=rng.standard_normal(nm),
        eta=rng.standard_normal(nm),
        mu=rng.standard_normal(nm),
        U=np.zeros(nm),
        V=np.zeros(nm),
        k=0,
    )


def theta_update(state: AdmmState, y: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    """Closed-form quadratic step averaging the data against both consensus
    targets: (y + rho*(eta - U + mu - V)) / (2*rho + 1)."""
    rho = cfg.admm_penalty
    return (y + rho * (state.eta - state.U + state.mu - state.V)) / (2.0 * rho + 1.0)


def eta_update(state: AdmmState, op: ProjectionOperator) -> np.ndarray:
    """Pull theta + U back onto the per-voxel column space of the design."""
    return project_rowspace(op, state.theta + state.U)


def mu_update(
    state: AdmmState,
    g: IncidenceGraph,
    cfg: SolverConfig,
    batches: list[np.ndarray] | None = None,
    threads: int = 1,
) -> np.ndarray:
    """Per-subject graph-fused-lasso solves on theta + V at penalty lam/rho.

    The problem separates across subjects, so any grouping of subjects into
    ``batches`` returns the same vector; the grouping and ``threads`` only
    affect scheduling.  Warm starts reuse the previous mu per subject when
    the inner config allows.
    """
    nm = state.theta.size
    M = g.num_nodes
    if nm % M != 0:
        raise ShapeMismatchError(
            f"state dimension {nm} is not a multiple of the node count {M}"
        )
    return _solve_mu_rows(state.theta + state.V, state.mu, g, cfg, batches, threads)


def _solve_mu_rows(
    target: np.ndarray,
    warm_flat: np.ndarray,
    g: IncidenceGraph,
    cfg: SolverConfig,
    batches: list[np.ndarray] | None,
    threads: int,
) -> np.ndarray:
    n = target.size // g.num_nodes
    M = g.num_nodes
    target = target.reshape(n, M)
    warm = warm_flat.reshape(n, M) if cfg.gfl.warm_start else None
    lam_eff = cfg.lam / cfg.admm_penalty
    out = np.empty((n, M))

    if batches is None:
        batches = [np.arange(n)]
    else:
        flat = np.concatenate([np.asarray(b, dtype=int) for b in batches]) \
            if batches else np.empty(0, dtype=int)
        if sorted(flat.tolist()) != list(range(n)):
            raise ValueError("batches must partition the subject indices")

    def solve_one(i: int) -> None:
        sol = gfl_solve(
            g, target[i], lam_eff, cfg.gfl,
            warm=warm[i] if warm is not None else None,
        )
        out[i] = sol.value

    for batch in batches:
        if threads > 1 and len(batch) > 1:
            with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as ex:
                list(ex.map(solve_one, [int(i) for i in batch]))
        else:
            for i in batch:
                solve_one(int(i))
    return out.ravel()


def _residuals(theta: np.ndarray, prev_theta: np.ndarray, op: ProjectionOperator):
    prev_norm = float(np.linalg.norm(prev_theta))
    change = float(np.linalg.norm(theta - prev_theta))
    rel = change / prev_norm if prev_norm > 0 else change
    # distance to the feasible subspace, normalized so tol is scale-free
    dist = float(np.linalg.norm(theta - project_rowspace(op, theta)))
    feas = dist / (1.0 + float(np.linalg.norm(theta)))
    return rel, feas


def convergence_check(
    state: AdmmState,
    prev_theta: np.ndarray,
    op: ProjectionOperator,
    tol: float,
) -> bool:
    """Stop when both the relative theta change and the normalized distance
    of theta from the feasible subspace fall below ``tol``."""
    rel, feas = _residuals(state.theta, prev_theta, op)
    return max(rel, feas) < tol


def objective_value(
    data: Dataset, g: IncidenceGraph, lam: float, Gamma: np.ndarray
) -> float:
    """Penalized objective at given coefficient maps."""
    fitted = data.X @ Gamma
    resid = data.Y - fitted
    tv = sum(
        float(np.sum(np.abs(incidence_apply(g, fitted[i]))))
        for i in range(fitted.shape[0])
    )
    return float(0.5 * np.sum(resid**2) + lam * tv)


def _theta_objective(
    y: np.ndarray, theta: np.ndarray, g: IncidenceGraph, lam: float, n: int
) -> float:
    T = theta.reshape(n, g.num_nodes)
    if g.num_edges:
        diffs = T[:, g.edges[:, 0]] - T[:, g.edges[:, 1]]
        tv = float(np.sum(np.abs(diffs)))
    else:
        tv = 0.0
    return float(0.5 * np.sum((y - theta) ** 2) + lam * tv)


def fit(
    data: Dataset,
    g: IncidenceGraph,
    cfg: SolverConfig,
    threads: int = 1,
) -> FitResult:
    """Solve the penalized regression by the outer ADMM loop.

    Parameters
    ----------
    data : Dataset
    g : IncidenceGraph
        Penalty graph; ``g.num_nodes`` must equal the voxel count.
    cfg : SolverConfig
    threads : int
        Worker threads for the per-subject inner solves.

    Returns
    -------
    FitResult
        ``converged=False`` (with the last iterate) when ``max_iter`` runs
        out; callers decide whether that is fatal.  With ``lam == 0`` the
        loop converges to the least-squares fit.
    """
    if g.num_nodes != data.shape.M:
        raise ShapeMismatchError(
            f"graph has {g.num_nodes} nodes but outcomes have {data.shape.M} voxels"
        )
    op = ProjectionOperator.from_design(data.X)
    n = data.n
    y = data.Y.ravel()
    # Inner solves stay an order tighter than the outer tolerance so the
    # mu block does not limit the achievable residual.
    gfl_cfg = dataclasses.replace(
        cfg.gfl, inner_tol=min(cfg.gfl.inner_tol, cfg.tol / 10.0)
    )
    cfg_eff = dataclasses.replace(cfg, gfl=gfl_cfg)

    state = init_state(y.size, cfg.seed)
    rel_hist: list[float] = []
    feas_hist: list[float] = []
    obj_hist: list[float] = []
    converged = False
    alpha = cfg.relax
    for _ in range(cfg.max_iter):
        prev = state.theta
        state.theta = theta_update(state, y, cfg_eff)
        if alpha != 1.0:
            # over-relaxation: blend the new theta with each consensus block
            th_eta = alpha * state.theta + (1.0 - alpha) * state.eta
            th_mu = alpha * state.theta + (1.0 - alpha) * state.mu
        else:
            th_eta = th_mu = state.theta
        state.eta = project_rowspace(op, th_eta + state.U)
        state.mu = _solve_mu_rows(th_mu + state.V, state.mu, g, cfg_eff,
                                  None, threads)
        state.U = state.U + th_eta - state.eta
        state.V = state.V + th_mu - state.mu
        state.k += 1
        rel, feas = _residuals(state.theta, prev, op)
        rel_hist.append(rel)
        feas_hist.append(feas)
        obj_hist.append(_theta_objective(y, state.theta, g, cfg.lam, n))
        if max(rel, feas) < cfg.tol:
            converged = True
            break

    Gamma = gamma_from_theta(op, data.X, state.theta)
    return FitResult(
        Gamma=Gamma,
        theta=state.theta,
        diagnostics=Diagnostics(
            rel_change=np.asarray(rel_hist),
            feasibility=np.asarray(feas_hist),
            objective=np.asarray(obj_hist),
        ),
        iterations=state.k,
        converged=converged,
    )


def kkt_certificate(
    result: FitResult,
    data: Dataset,
    g: IncidenceGraph,
    lam: float,
    activity_tol: float | None = None,
    size_limit: int = 20000,
) -> float:
    """Residual of the first-order optimality system at a candidate solution.

    Stationarity restricted to the feasible subspace requires a subgradient
    z of the total-variation term with

        project(theta - y + lam * D_all z) = 0,

    where z is fixed to the difference sign on clearly active edges and free
    in [-1, 1] elsewhere.  The returned value is the minimum attainable
    two-norm of the projected expression; near zero certifies optimality.
    Dense; guarded to small problems.
    """
    theta = np.asarray(result.theta, dtype=float)
    n, M, m = data.n, data.shape.M, g.num_edges
    if theta.size != n * M:
        raise ShapeMismatchError(
            f"theta has {theta.size} entries, expected {n * M}"
        )
    if n * M > size_limit or n * m > size_limit:
        raise ValueError(
            f"problem too large for the dense certificate ({n * M} values, "
            f"{n * m} edge copies; limit {size_limit})"
        )
    op = ProjectionOperator.from_design(data.X)
    y = data.Y.ravel()

    T = theta.reshape(n, M)
    if m == 0 or lam == 0:
        return float(np.linalg.norm(project_rowspace(op, theta - y)))
    diffs = T[:, g.edges[:, 0]] - T[:, g.edges[:, 1]]
    if activity_tol is None:
        activity_tol = 1e-6 * (1.0 + float(np.max(np.abs(diffs))))
    active = np.abs(diffs) > activity_tol

    # Fixed part of the subgradient: signs on active edges.
    z_fixed = np.where(active, np.sign(diffs), 0.0)
    base = np.zeros((n, M))
    np.add.at(base, (slice(None), g.edges[:, 0]), z_fixed)
    np.add.at(base, (slice(None), g.edges[:, 1]), -z_fixed)
    c = project_rowspace(op, (theta - y) + lam * base.ravel())

    free = np.argwhere(~active)
    if free.size == 0:
        return float(np.linalg.norm(c))
    # One column per free edge copy: lam * project of that edge's incidence
    # column placed in the subject's block.
    H = op.Q @ op.Q.T
    cols = np.zeros((n * M, len(free)))
    for j, (i, e) in enumerate(free):
        col = np.zeros((n, M))
        col[:, g.edges[e, 0]] = H[:, i]
        col[:, g.edges[e, 1]] = -H[:, i]
        cols[:, j] = lam * col.ravel()
    res = scipy.optimize.lsq_linear(
        cols, -c, bounds=(-1.0, 1.0), tol=1e-14, max_iter=500
    )
    return float(np.linalg.norm(cols @ res.x + c))


def select_lambda_cv(
    data: Dataset,
    g: IncidenceGraph,
    grid,
    cfg: SolverConfig | None = None,
    fitter=None,
    n_folds: int = 5,
    seed: int = 0,
    threads: int = 1,
):
    """Pick a penalty from ``grid`` by K-fold cross-validation over subjects.

    Scores each candidate by the held-out residual sum of squares
    ``||Y_test - X_test Gamma_hat||_F^2`` summed across folds.  ``fitter``
    may override the default solver fit, e.g. to tune a two-stage baseline;
    it receives (train_data, lam) and returns coefficient maps.

    Returns
    -------
    (best_lam, scores) : float and ndarray aligned with ``grid``.
    """
    grid = [float(v) for v in grid]
    if not grid:
        raise ValueError("grid must contain at least one value")
    if n_folds < 2:
        raise ValueError(f"need at least 2 folds, got {n_folds}")
    n = data.n
    if n_folds > n:
        raise ValueError(f"{n_folds} folds but only {n} subjects")
    cfg = cfg if cfg is not None else SolverConfig()

    if fitter is None:
        def fitter(train: Dataset, lam: float) -> np.ndarray:
            run = dataclasses.replace(cfg, lam=lam)
            return fit(train, g, run, threads=threads).Gamma

    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    folds = np.array_split(order, n_folds)
    scores = np.zeros(len(grid))
    for fold in folds:
        mask = np.ones(n, dtype=bool)
        mask[fold] = False
        train = Dataset(X=data.X[mask], Y=data.Y[mask], shape=data.shape)
        X_test, Y_test = data.X[fold], data.Y[fold]
        for j, lam in enumerate(grid):
            Gamma = fitter(train, lam)
            scores[j] += float(np.sum((Y_test - X_test @ Gamma) ** 2))
    best = int(np.argmin(scores))
    return grid[best], scores
