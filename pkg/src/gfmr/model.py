"""Data model for array-outcome regression.

A sample is a design row x_i in R^p paired with an outcome array of shape
``dims``; outcomes are stored vectorized, one subject per row of ``Y``.  The
fitted-mean vector ``theta`` used by the solver stacks the subjects'
vectorized means back to back (subject-major), so ``theta.reshape(n, M)``
recovers one subject per row.

The key linear-algebra object is the per-voxel projection onto the column
space of the design matrix: applying it to ``theta`` projects each voxel's
n-vector of fitted values onto span(X) simultaneously.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import RankDeficiencyError, ShapeMismatchError

# Relative threshold on the R-factor diagonal below which the design is
# treated as rank deficient.  Deliberately strict: a nearly collinear design
# should fail loudly rather than silently produce a pseudo-inverse fit.
RANK_TOL = 1e-10


@dataclass(frozen=True)
class TensorShape:
    """Shape ``(r_1, ..., r_m)`` of the outcome array attached to one subject.

    Parameters
    ----------
    dims : tuple of int
        Per-axis sizes, each at least 1.  A plain vector outcome is the
        one-axis case ``(M,)``.
    """

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) == 0:
            raise ValueError("tensor shape needs at least one axis")
        if any(d < 1 for d in dims):
            raise ValueError(f"tensor axis sizes must be >= 1, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def M(self) -> int:
        """Total number of voxels."""
        return int(np.prod(self.dims))

    @property
    def order(self) -> int:
        """Number of axes."""
        return len(self.dims)


def vectorize(tensor: np.ndarray, shape: TensorShape) -> np.ndarray:
    """Stack a tensor into a length-M vector with the first index fastest.

    Entry ``(i_1, ..., i_m)`` (zero-based) lands at position
    ``i_1 + i_2*r_1 + i_3*r_1*r_2 + ...``, i.e. column-major order.

    Parameters
    ----------
    tensor : ndarray
        Array whose shape must equal ``shape.dims``.
    shape : TensorShape

    Returns
    -------
    ndarray
        Flat vector of length ``shape.M``.
    """
    t = np.asarray(tensor, dtype=float)
    if tuple(t.shape) != shape.dims:
        raise ShapeMismatchError(
            f"tensor has shape {t.shape}, expected {shape.dims}"
        )
    return t.ravel(order="F")


def matricize(v: np.ndarray, shape: TensorShape) -> np.ndarray:
    """Invert :func:`vectorize`, rebuilding the tensor from its flat vector."""
    vec = np.asarray(v, dtype=float)
    if vec.ndim != 1 or vec.size != shape.M:
        raise ShapeMismatchError(
            f"vector has shape {vec.shape}, expected ({shape.M},)"
        )
    return vec.reshape(shape.dims, order="F")


@dataclass(frozen=True)
class Dataset:
    """Design matrix plus vectorized outcomes.

    Attributes
    ----------
    X : ndarray, shape (n, p)
        Scalar covariates, one row per subject.
    Y : ndarray, shape (n, M)
        Vectorized outcome arrays, one subject per row, columns ordered as
        produced by :func:`vectorize`.
    shape : TensorShape
        The per-subject outcome shape; ``shape.M`` must equal ``Y.shape[1]``.
    """

    X: np.ndarray
    Y: np.ndarray
    shape: TensorShape

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim != 2:
            raise ShapeMismatchError(f"X must be 2-d, got ndim={X.ndim}")
        if Y.ndim != 2:
            raise ShapeMismatchError(f"Y must be 2-d, got ndim={Y.ndim}")
        if X.shape[0] != Y.shape[0]:
            raise ShapeMismatchError(
                f"X has {X.shape[0]} rows but Y has {Y.shape[0]}"
            )
        if Y.shape[1] != self.shape.M:
            raise ShapeMismatchError(
                f"Y has {Y.shape[1]} columns but the outcome shape implies "
                f"{self.shape.M}"
            )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class ProjectionOperator:
    """Per-voxel orthogonal projection onto the column space of the design.

    Built from a thin QR factorization ``X = Q R``; the projection applied to
    a subject-major vector ``theta`` reshapes it to (n, M), left-multiplies by
    ``Q Q^T``, and flattens back.  The Kronecker-structured projection over
    all voxels is therefore never materialized.

    Construction fails with :class:`RankDeficiencyError` when any diagonal of
    ``R`` is below ``RANK_TOL`` relative to the largest, so downstream code
    may assume ``R`` is invertible.
    """

    Q: np.ndarray = field(repr=False)
    R: np.ndarray = field(repr=False)
    n: int
    p: int

    @classmethod
    def from_design(cls, X: np.ndarray, rank_tol: float = RANK_TOL) -> "ProjectionOperator":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ShapeMismatchError(f"design must be 2-d, got ndim={X.ndim}")
        n, p = X.shape
        if p < 1:
            raise ShapeMismatchError("design needs at least one column")
        if n < p:
            raise RankDeficiencyError(
                f"design has fewer rows ({n}) than columns ({p})"
            )
        Q, R = scipy.linalg.qr(X, mode="economic")
        diag = np.abs(np.diag(R))
        if diag.min() <= rank_tol * diag.max():
            raise RankDeficiencyError(
                "design matrix is rank deficient "
                f"(|R| diagonal range [{diag.min():.3e}, {diag.max():.3e}])"
            )
        return cls(Q=Q, R=R, n=n, p=p)


def project_rowspace(op: ProjectionOperator, theta: np.ndarray) -> np.ndarray:
    """Project a subject-major vector onto the design's column space, voxelwise.

    Parameters
    ----------
    op : ProjectionOperator
    theta : ndarray
        Length ``n*M`` for some M >= 1.

    Returns
    -------
    ndarray
        Projected vector of the same length.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.size == 0 or theta.size % op.n != 0:
        raise ShapeMismatchError(
            f"theta has shape {theta.shape}, expected length divisible by n={op.n}"
        )
    T = theta.reshape(op.n, -1)
    return (op.Q @ (op.Q.T @ T)).ravel()


def gamma_from_theta(op: ProjectionOperator, X: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Recover the coefficient matrix from a fitted-mean vector.

    Computes ``(X^T X)^{-1} X^T`` applied to ``theta`` reshaped to (n, M),
    using the cached QR factors.  For a feasible ``theta`` (one lying in the
    per-voxel column space) the product ``X @ Gamma`` reproduces it exactly;
    otherwise the result is the least-squares coefficient of the projection.
    """
    X = np.asarray(X, dtype=float)
    if X.shape != (op.n, op.p):
        raise ShapeMismatchError(
            f"design has shape {X.shape}, expected ({op.n}, {op.p})"
        )
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.size == 0 or theta.size % op.n != 0:
        raise ShapeMismatchError(
            f"theta has shape {theta.shape}, expected length divisible by n={op.n}"
        )
    T = theta.reshape(op.n, -1)
    return scipy.linalg.solve_triangular(op.R, op.Q.T @ T)


@dataclass
class Diagnostics:
    """Per-iteration solver records.

    ``rel_change[k]`` is ``||theta_{k+1} - theta_k|| / ||theta_k||``,
    ``feasibility[k]`` is the distance from ``theta_{k+1}`` to the per-voxel
    column space, and ``objective[k]`` is the penalized least-squares
    objective at ``theta_{k+1}``.
    """

    rel_change: np.ndarray
    feasibility: np.ndarray
    objective: np.ndarray

    def combined(self) -> np.ndarray:
        """Residual the stopping rule thresholds: max of change and feasibility."""
        return np.maximum(self.rel_change, self.feasibility)

    @classmethod
    def empty(cls) -> "Diagnostics":
        z = np.empty(0)
        return cls(rel_change=z, feasibility=z.copy(), objective=z.copy())


@dataclass
class FitResult:
    """Outcome of a model fit.

    Attributes
    ----------
    Gamma : ndarray, shape (p, M)
        Coefficient maps, one row per covariate, columns in vectorized order.
    theta : ndarray, shape (n*M,)
        Subject-major fitted means.  Feasible up to the solver's tolerance:
        ``theta`` agrees with ``vec-by-subject(X @ Gamma)`` to that accuracy.
    diagnostics : Diagnostics
    iterations : int
    converged : bool
    """

    Gamma: np.ndarray
    theta: np.ndarray
    diagnostics: Diagnostics
    iterations: int
    converged: bool


def ols_fit(data: Dataset) -> FitResult:
    """Ordinary least squares, voxel by voxel.

    Returns a :class:`FitResult` whose ``theta`` holds the fitted means
    ``X @ Gamma`` in subject-major order.  Raises
    :class:`RankDeficiencyError` when the design lacks full column rank.
    """
    op = ProjectionOperator.from_design(data.X)
    Gamma = scipy.linalg.solve_triangular(op.R, op.Q.T @ data.Y)
    theta = (data.X @ Gamma).ravel()
    return FitResult(
        Gamma=Gamma,
        theta=theta,
        diagnostics=Diagnostics.empty(),
        iterations=0,
        converged=True,
    )
