"""Graph constants and the finite-sample error bound built from them.

Two quantities summarize how hard a penalty graph makes estimation: the
inverse scaling factor (largest column norm of the pseudo-inverse of D^T,
which controls how noise enters through the penalty) and the compatibility
factor of an edge subset T,

    kappa_T = inf_{theta != 0} sqrt(|T|) ||theta||_2 / ||(D^T theta)_T||_1.

Both feed the right-hand side of the oracle inequality that
``oracle_bound_rhs`` evaluates and ``oracle_check`` tests by Monte Carlo.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import GfmrError
from .graphs import IncidenceGraph
from .model import Dataset
from .solver import SolverConfig, fit

# Dense decompositions only; anything larger needs structure we do not exploit.
NODE_LIMIT = 2000
# Exhaustive sign enumeration is exact and affordable up to this |T|.
ENUM_LIMIT = 18


def inverse_scaling_factor(g: IncidenceGraph, node_limit: int = NODE_LIMIT) -> float:
    """Largest column norm of the pseudo-inverse of D^T, one column per edge.

    Undefined without edges; dense SVD underneath, hence the size guard.
    """
    if g.num_edges == 0:
        raise ValueError("inverse scaling factor is undefined for an empty edge set")
    if g.num_nodes > node_limit:
        raise ValueError(
            f"graph too large for a dense pseudo-inverse "
            f"({g.num_nodes} nodes, limit {node_limit})"
        )
    Dt = g.incidence().toarray().T
    S = np.linalg.pinv(Dt)
    return float(np.linalg.norm(S, axis=0).max())


def _edge_rows(g: IncidenceGraph, T: np.ndarray) -> np.ndarray:
    A = np.zeros((T.size, g.num_nodes))
    A[np.arange(T.size), g.edges[T, 0]] = 1.0
    A[np.arange(T.size), g.edges[T, 1]] = -1.0
    return A


def _check_edge_subset(g: IncidenceGraph, T) -> np.ndarray:
    T = np.unique(np.asarray(T, dtype=int))
    if T.size == 0:
        raise ValueError("edge subset T must be nonempty")
    if T.min() < 0 or T.max() >= g.num_edges:
        raise ValueError(
            f"edge indices must lie in [0, {g.num_edges}), got range "
            f"[{T.min()}, {T.max()}]"
        )
    return T


def compatibility_factor(
    g: IncidenceGraph,
    T,
    n_starts: int = 50,
    tol: float = 1e-8,
    seed: int = 0,
    node_limit: int = NODE_LIMIT,
) -> float:
    """Compatibility factor kappa_T of an edge subset.

    Computing it exactly means maximizing ||(D^T theta)_T||_1 over the unit
    sphere, a convex maximization.  For ``|T| <= ENUM_LIMIT`` the sign
    pattern of the active differences is enumerated, which is exact; larger
    subsets fall back to multi-start fixed-point ascent, which can only
    understate the maximum and hence overstate kappa_T.
    """
    T = _check_edge_subset(g, T)
    if g.num_nodes > node_limit:
        raise ValueError(
            f"graph too large for the dense computation "
            f"({g.num_nodes} nodes, limit {node_limit})"
        )
    A = _edge_rows(g, T)
    k = T.size
    if k <= ENUM_LIMIT:
        # max_{||theta||=1} ||A theta||_1 = max over sign vectors of ||A^T s||.
        # Fixing s[0] = +1 halves the enumeration by symmetry.
        count = 1 << (k - 1)
        bits = (np.arange(count)[:, None] >> np.arange(k - 1)[None, :]) & 1
        S = np.empty((count, k))
        S[:, 0] = 1.0
        S[:, 1:] = 2.0 * bits - 1.0
        G = A @ A.T
        vals = np.einsum("ij,jk,ik->i", S, G, S)
        fmax = math.sqrt(float(vals.max()))
    else:
        rng = np.random.default_rng(seed)
        fmax = 0.0
        starts = [A[j] for j in range(min(k, n_starts))]
        while len(starts) < n_starts:
            starts.append(rng.standard_normal(g.num_nodes))
        for theta in starts:
            norm = np.linalg.norm(theta)
            if norm == 0:
                continue
            theta = theta / norm
            best = float(np.sum(np.abs(A @ theta)))
            for _ in range(200):
                direction = A.T @ np.sign(A @ theta)
                norm = np.linalg.norm(direction)
                if norm == 0:
                    break
                theta = direction / norm
                val = float(np.sum(np.abs(A @ theta)))
                if val <= best + tol:
                    best = max(best, val)
                    break
                best = val
            fmax = max(fmax, best)
    if fmax == 0.0:
        return math.inf
    return math.sqrt(k) / fmax


@dataclass
class OracleBoundSpec:
    """Context for the error bound: penalty graph, subject count, noise level
    ``sigma``, failure probability ``delta``, and the candidate active edge
    set ``T`` (indices into the base graph's edge list, applied to every
    subject's block).  The graph constants are computed on first use and
    cached."""

    graph: IncidenceGraph
    n: int
    sigma: float
    delta: float
    T: np.ndarray

    _kappa: float | None = dataclasses.field(default=None, repr=False)
    _rho: float | None = dataclasses.field(default=None, repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not (self.sigma >= 0 and np.isfinite(self.sigma)):
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")
        if not (0 < self.delta < 1):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        self.T = _check_edge_subset(self.graph, self.T)

    @property
    def kappa(self) -> float:
        if self._kappa is None:
            self._kappa = compatibility_factor(self.graph, self.T)
        return self._kappa

    @property
    def rho(self) -> float:
        if self._rho is None:
            self._rho = inverse_scaling_factor(self.graph)
        return self._rho


def theorem_lambda(spec: OracleBoundSpec) -> float:
    """Penalty level rho(D) * sigma * sqrt(log(m n M / delta)) the bound assumes."""
    m = spec.graph.num_edges
    M = spec.graph.num_nodes
    return spec.rho * spec.sigma * math.sqrt(math.log(m * spec.n * M / spec.delta))


def oracle_bound_rhs(
    spec: OracleBoundSpec,
    theta_bar: np.ndarray,
    theta_star: np.ndarray,
) -> float:
    """Right-hand side of the error bound at a feasible comparator theta_bar.

    The four terms are the comparator's distance to the truth, its
    total-variation mass off T, a dimension term, and the compatibility term
    scaling with |T|.  With ``sigma == 0`` only the comparator distance
    survives.
    """
    g = spec.graph
    n, M, m = spec.n, g.num_nodes, g.num_edges
    theta_bar = np.asarray(theta_bar, dtype=float)
    theta_star = np.asarray(theta_star, dtype=float)
    if theta_bar.shape != (n * M,) or theta_star.shape != (n * M,):
        raise ValueError(
            f"theta vectors must have shape ({n * M},), got "
            f"{theta_bar.shape} and {theta_star.shape}"
        )
    lam = theorem_lambda(spec)
    comp = np.setdiff1d(np.arange(m), spec.T)
    Tb = theta_bar.reshape(n, M)
    if comp.size:
        diffs = Tb[:, g.edges[comp, 0]] - Tb[:, g.edges[comp, 1]]
        tv_off = float(np.sum(np.abs(diffs)))
    else:
        tv_off = 0.0
    term_dist = float(np.sum((theta_bar - theta_star) ** 2))
    term_tv = 4.0 * lam * tv_off
    term_dim = 64.0 * spec.sigma**2 * math.log(2.0 * math.e * n * M / spec.delta)
    term_comp = (
        8.0
        * spec.rho**2
        * spec.sigma**2
        * math.log(m * n * M / spec.delta)
        * spec.kappa**-2
        * spec.T.size
    )
    return term_dist + term_tv + term_dim + term_comp


@dataclass
class OracleCheckResult:
    """Monte Carlo summary: ``violation_rate`` over the replicates that
    completed, with solver failures reported separately."""

    replicates: int
    completed: int
    violations: int
    failures: int
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def violation_rate(self) -> float:
        if self.completed == 0:
            raise GfmrError("no replicate completed; violation rate undefined")
        return self.violations / self.completed


def oracle_check(
    replicates: int,
    generator,
    spec: OracleBoundSpec,
    cfg: SolverConfig | None = None,
    threads: int = 1,
) -> OracleCheckResult:
    """Empirically test the bound with the truth itself as comparator.

    ``generator(r)`` must yield a ``(Dataset, Gamma_star)`` pair for
    replicate r, with outcomes on ``spec.graph`` and ``spec.n`` subjects.
    Each replicate is fit at the bound's own penalty level and counts as a
    violation when ``||theta_star - theta_hat||^2`` exceeds the bound.
    """
    if replicates < 1:
        raise ValueError(f"replicates must be >= 1, got {replicates}")
    base = cfg if cfg is not None else SolverConfig()
    lhs: list[float] = []
    rhs: list[float] = []
    violations = 0
    failures = 0
    for r in range(replicates):
        data, gamma_star = generator(r)
        if data.shape.M != spec.graph.num_nodes or data.n != spec.n:
            raise ValueError(
                "generator output does not match the bound spec "
                f"(n={data.n}, M={data.shape.M})"
            )
        theta_star = (data.X @ gamma_star).ravel()
        run = dataclasses.replace(base, lam=theorem_lambda(spec), seed=base.seed + r)
        try:
            res = fit(data, spec.graph, run, threads=threads)
        except GfmrError:
            failures += 1
            continue
        if not res.converged:
            failures += 1
            continue
        left = float(np.sum((theta_star - res.theta) ** 2))
        right = oracle_bound_rhs(spec, theta_star, theta_star)
        lhs.append(left)
        rhs.append(right)
        if left > right:
            violations += 1
    return OracleCheckResult(
        replicates=replicates,
        completed=len(lhs),
        violations=violations,
        failures=failures,
        lhs=np.asarray(lhs),
        rhs=np.asarray(rhs),
    )
