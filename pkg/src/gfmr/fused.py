"""Exact 1-D fused lasso and a trail-consensus solver for graphs.

``fl1d_solve`` minimizes

    0.5 * sum_i w_i (y_i - b_i)^2  +  lam * sum_i |b_{i+1} - b_i|

by a forward sweep over the knots of the piecewise-linear derivative followed
by a backward clamping pass; the answer is exact, not iterative.

``gfl_solve`` extends the penalty to an arbitrary graph.  The edge set is
split into trails, each node gets one copy per trail visit, and ADMM
alternates an averaging step across copies with an exact 1-D solve along
every trail.  Chains (and any graph whose edges form a single simple path)
skip the consensus loop entirely and go through the 1-D routine.
"""

from __future__ import annotations

import warnings
import weakref
from dataclasses import dataclass

import numpy as np
from numba import njit

from .exceptions import GflConvergenceWarning, ShapeMismatchError
from .graphs import IncidenceGraph, decompose_trails


@njit(cache=True, nogil=True)
def _dp_fused(y, w, lam, x, a, b, tm, tp, beta):
    """Weighted 1-D fused lasso on ``y[:n]``; writes the minimizer to ``beta[:n]``.

    Scratch arrays are caller-provided so trail loops can reuse them:
    ``x``, ``a``, ``b`` need 2n slots, ``tm``/``tp`` hold the backward
    clamping thresholds (n-1 used).  Assumes n >= 1, lam > 0, w > 0.
    """
    n = y.shape[0]
    if n == 1:
        beta[0] = y[0]
        return
    # First data point by hand: thresholds where the derivative hits -lam/+lam.
    tm[0] = y[0] - lam / w[0]
    tp[0] = y[0] + lam / w[0]
    l = n - 1
    r = n
    x[l] = tm[0]
    x[r] = tp[0]
    a[l] = w[0]
    b[l] = -w[0] * y[0] + lam
    a[r] = -w[0]
    b[r] = w[0] * y[0] + lam
    afirst = w[1]
    bfirst = -lam - w[1] * y[1]
    alast = -w[1]
    blast = -lam + w[1] * y[1]
    for k in range(1, n - 1):
        # Walk up from the left until the derivative exceeds -lam.
        alo = afirst
        blo = bfirst
        lo = l
        while lo <= r:
            if alo * x[lo] + blo > -lam:
                break
            alo += a[lo]
            blo += b[lo]
            lo += 1
        tm[k] = (-lam - blo) / alo
        l = lo - 1
        x[l] = tm[k]
        # Walk down from the right until the derivative drops below lam.
        ahi = alast
        bhi = blast
        hi = r
        while hi >= l:
            if -ahi * x[hi] - bhi < lam:
                break
            ahi += a[hi]
            bhi += b[hi]
            hi -= 1
        tp[k] = (lam + bhi) / (-ahi)
        r = hi + 1
        x[r] = tp[k]
        a[l] = alo
        b[l] = blo + lam
        a[r] = ahi
        b[r] = bhi + lam
        afirst = w[k + 1]
        bfirst = -lam - w[k + 1] * y[k + 1]
        alast = -w[k + 1]
        blast = -lam + w[k + 1] * y[k + 1]
    # Last coefficient sits where the full derivative vanishes.
    alo = afirst
    blo = bfirst
    lo = l
    while lo <= r:
        if alo * x[lo] + blo > 0:
            break
        alo += a[lo]
        blo += b[lo]
        lo += 1
    beta[n - 1] = -blo / alo
    for k in range(n - 2, -1, -1):
        if beta[k + 1] > tp[k]:
            beta[k] = tp[k]
        elif beta[k + 1] < tm[k]:
            beta[k] = tm[k]
        else:
            beta[k] = beta[k + 1]


@njit(cache=True, nogil=True)
def _gfl_consensus(y, lam, alpha, rep_nodes, offsets, counts, ea, eb, mu0,
                   max_iter, tol):
    """Consensus ADMM over trail copies.

    ``rep_nodes`` concatenates the trail node sequences, ``offsets`` marks
    trail boundaries, ``counts[v]`` is the number of copies of node v.
    Returns (mu, iterations, converged, objective trace); on non-convergence
    mu is the best-objective iterate seen.
    """
    M = y.shape[0]
    R = rep_nodes.shape[0]
    T = offsets.shape[0] - 1
    Lmax = 0
    for t in range(T):
        L = offsets[t + 1] - offsets[t]
        if L > Lmax:
            Lmax = L
    xs = np.empty(2 * Lmax)
    acc_a = np.empty(2 * Lmax)
    acc_b = np.empty(2 * Lmax)
    tms = np.empty(Lmax)
    tps = np.empty(Lmax)
    vbuf = np.empty(Lmax)
    wbuf = np.ones(Lmax)
    bbuf = np.empty(Lmax)
    mu = mu0.copy()
    z = np.empty(R)
    u = np.zeros(R)
    for i in range(R):
        z[i] = mu[rep_nodes[i]]
    acc = np.empty(M)
    lam_t = lam / alpha
    obj = np.empty(max_iter)
    best_obj = np.inf
    mu_best = mu.copy()
    converged = False
    it = 0
    m = ea.shape[0]
    sqrt_r = np.sqrt(R)
    for it in range(1, max_iter + 1):
        # Average the copies (data term included); untouched nodes keep y.
        for v in range(M):
            acc[v] = 0.0
        for i in range(R):
            acc[rep_nodes[i]] += z[i] - u[i]
        for v in range(M):
            mu[v] = (y[v] + alpha * acc[v]) / (1.0 + alpha * counts[v])
        # Exact 1-D solve along every trail.
        dz2 = 0.0
        for t in range(T):
            s = offsets[t]
            L = offsets[t + 1] - s
            for i in range(L):
                vbuf[i] = mu[rep_nodes[s + i]] + u[s + i]
            _dp_fused(vbuf[:L], wbuf[:L], lam_t, xs, acc_a, acc_b, tms, tps, bbuf)
            for i in range(L):
                d = bbuf[i] - z[s + i]
                dz2 += d * d
                z[s + i] = bbuf[i]
        # Dual ascent on the copy constraints, plus residual bookkeeping.
        pri2 = 0.0
        smu2 = 0.0
        z2 = 0.0
        u2 = 0.0
        for i in range(R):
            sv = mu[rep_nodes[i]]
            d = sv - z[i]
            u[i] += d
            pri2 += d * d
            smu2 += sv * sv
            z2 += z[i] * z[i]
            u2 += u[i] * u[i]
        o = 0.0
        for v in range(M):
            dv = y[v] - mu[v]
            o += 0.5 * dv * dv
        for e in range(m):
            o += lam * abs(mu[ea[e]] - mu[eb[e]])
        obj[it - 1] = o
        if o < best_obj:
            best_obj = o
            for v in range(M):
                mu_best[v] = mu[v]
        pri = np.sqrt(pri2)
        dua = alpha * np.sqrt(dz2)
        scale = np.sqrt(smu2) if smu2 > z2 else np.sqrt(z2)
        eps_pri = sqrt_r * tol + tol * scale
        eps_dua = sqrt_r * tol + tol * alpha * np.sqrt(u2)
        if pri <= eps_pri and dua <= eps_dua:
            converged = True
            break
    if not converged:
        for v in range(M):
            mu[v] = mu_best[v]
    return mu, it, converged, obj[:it]


@dataclass(frozen=True)
class GflConfig:
    """Knobs for the consensus loop.

    ``inner_penalty`` is the ADMM coupling weight, ``inner_tol`` the residual
    tolerance, and ``warm_start`` controls whether callers should seed a
    solve with the previous solution.
    """

    inner_penalty: float = 1.0
    inner_tol: float = 1e-6
    inner_max_iter: int = 5000
    warm_start: bool = True

    def __post_init__(self):
        if not (self.inner_penalty > 0 and np.isfinite(self.inner_penalty)):
            raise ValueError(f"inner_penalty must be positive, got {self.inner_penalty}")
        if not (0 < self.inner_tol < 1):
            raise ValueError(f"inner_tol must lie in (0, 1), got {self.inner_tol}")
        if self.inner_max_iter < 1:
            raise ValueError(f"inner_max_iter must be >= 1, got {self.inner_max_iter}")


@dataclass
class GflSolution:
    """Result of one graph-fused-lasso solve.

    ``value`` is the minimizer (best iterate if not converged);
    ``objective_path`` records the objective after every consensus iteration
    and has a single entry when the exact shortcut was taken.
    """

    value: np.ndarray
    iterations: int
    converged: bool
    objective_path: np.ndarray


@dataclass(frozen=True)
class _GraphPlan:
    rep_nodes: np.ndarray
    offsets: np.ndarray
    counts: np.ndarray
    ea: np.ndarray
    eb: np.ndarray
    path_perm: np.ndarray | None


_PLANS: "weakref.WeakKeyDictionary[IncidenceGraph, _GraphPlan]" = weakref.WeakKeyDictionary()


def _plan(g: IncidenceGraph) -> _GraphPlan:
    plan = _PLANS.get(g)
    if plan is not None:
        return plan
    dec = decompose_trails(g)
    if dec.trails:
        rep_nodes = np.concatenate(dec.trails)
        lengths = np.array([t.size for t in dec.trails], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    else:
        rep_nodes = np.empty(0, dtype=np.int64)
        offsets = np.zeros(1, dtype=np.int64)
    counts = np.bincount(rep_nodes, minlength=g.num_nodes).astype(float)
    path_perm = None
    if len(dec.trails) == 1:
        t = dec.trails[0]
        if np.unique(t).size == t.size:
            path_perm = t
    plan = _GraphPlan(
        rep_nodes=rep_nodes,
        offsets=offsets,
        counts=counts,
        ea=np.ascontiguousarray(g.edges[:, 0]),
        eb=np.ascontiguousarray(g.edges[:, 1]),
        path_perm=path_perm,
    )
    _PLANS[g] = plan
    return plan


def gfl_objective(g: IncidenceGraph, y: np.ndarray, mu: np.ndarray, lam: float) -> float:
    """Objective 0.5*||y - mu||^2 + lam * sum over edges |mu_a - mu_b|."""
    diffs = mu[g.edges[:, 0]] - mu[g.edges[:, 1]] if g.num_edges else 0.0
    return float(0.5 * np.sum((y - mu) ** 2) + lam * np.sum(np.abs(diffs)))


def _check_signal(y, length: int, name: str) -> np.ndarray:
    y = np.ascontiguousarray(y, dtype=float)
    if y.ndim != 1 or y.size != length:
        raise ShapeMismatchError(f"{name} has shape {y.shape}, expected ({length},)")
    if not np.all(np.isfinite(y)):
        raise ValueError(f"{name} contains non-finite values")
    return y


def fl1d_solve(y: np.ndarray, node_weights: np.ndarray | None, lam: float) -> np.ndarray:
    """Exact weighted fused lasso on a chain.

    Parameters
    ----------
    y : ndarray
        Observations along the chain.
    node_weights : ndarray or None
        Positive per-node weights on the squared error; None means all ones.
    lam : float
        Difference penalty, >= 0.

    Returns
    -------
    ndarray
        The unique minimizer.
    """
    y = np.ascontiguousarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ShapeMismatchError(f"signal must be a nonempty vector, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("signal contains non-finite values")
    n = y.size
    if node_weights is None:
        w = np.ones(n)
    else:
        w = np.ascontiguousarray(node_weights, dtype=float)
        if w.shape != y.shape:
            raise ShapeMismatchError(
                f"node_weights has shape {w.shape}, expected {y.shape}"
            )
        if not np.all(np.isfinite(w)) or (w <= 0).any():
            raise ValueError("node_weights must be positive and finite")
    if not (np.isfinite(lam) and lam >= 0):
        raise ValueError(f"lam must be finite and >= 0, got {lam}")
    if lam == 0 or n == 1:
        return y.copy()
    beta = np.empty(n)
    _dp_fused(
        y, w, lam,
        np.empty(2 * n), np.empty(2 * n), np.empty(2 * n),
        np.empty(n), np.empty(n), beta,
    )
    return beta


def gfl_solve(
    g: IncidenceGraph,
    y: np.ndarray,
    lam: float,
    cfg: GflConfig | None = None,
    warm: np.ndarray | None = None,
) -> GflSolution:
    """Fused lasso over an arbitrary graph.

    Parameters
    ----------
    g : IncidenceGraph
    y : ndarray
        One observation per node.
    lam : float
        Difference penalty, >= 0.
    cfg : GflConfig, optional
    warm : ndarray, optional
        Starting point, typically the solution of a nearby problem.

    Returns
    -------
    GflSolution
        Exact when the graph is a chain/simple path or the penalty is zero;
        otherwise solved by consensus ADMM to ``cfg.inner_tol``.  A solve
        that exhausts ``inner_max_iter`` carries ``converged=False`` and
        raises :class:`GflConvergenceWarning`.
    """
    cfg = cfg if cfg is not None else GflConfig()
    y = _check_signal(y, g.num_nodes, "signal")
    if not (np.isfinite(lam) and lam >= 0):
        raise ValueError(f"lam must be finite and >= 0, got {lam}")
    if lam == 0 or g.num_edges == 0:
        value = y.copy()
        return GflSolution(
            value=value, iterations=0, converged=True,
            objective_path=np.array([gfl_objective(g, y, value, lam)]),
        )
    plan = _plan(g)
    if plan.path_perm is not None:
        value = y.copy()
        value[plan.path_perm] = fl1d_solve(y[plan.path_perm], None, lam)
        return GflSolution(
            value=value, iterations=0, converged=True,
            objective_path=np.array([gfl_objective(g, y, value, lam)]),
        )
    if warm is not None:
        mu0 = _check_signal(warm, g.num_nodes, "warm start")
    else:
        mu0 = y
    mu, iters, converged, obj = _gfl_consensus(
        y, lam, cfg.inner_penalty, plan.rep_nodes, plan.offsets, plan.counts,
        plan.ea, plan.eb, mu0, cfg.inner_max_iter, cfg.inner_tol,
    )
    if not converged:
        warnings.warn(
            f"graph-fused lasso stopped after {iters} iterations above "
            f"tolerance {cfg.inner_tol:g}; returning best iterate",
            GflConvergenceWarning,
            stacklevel=2,
        )
    return GflSolution(
        value=mu, iterations=int(iters), converged=bool(converged),
        objective_path=obj,
    )
