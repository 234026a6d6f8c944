"""Two-stage baselines: denoise-then-regress and regress-then-denoise.

Both decouple the spatial smoothing from the regression, which is exactly
what the joint solver avoids; they share its graph machinery so comparisons
isolate that modeling choice.  A single penalty is applied uniformly across
images or coefficient maps.
"""

from __future__ import annotations

import numpy as np

from .fused import GflConfig, gfl_solve
from .graphs import IncidenceGraph
from .model import Dataset, ols_fit


def tv_denoise(
    g: IncidenceGraph,
    image: np.ndarray,
    lam: float,
    cfg: GflConfig | None = None,
) -> np.ndarray:
    """Total-variation denoising of one vectorized image."""
    return gfl_solve(g, image, lam, cfg).value


def tv_ols_fit(
    data: Dataset,
    g: IncidenceGraph,
    lam: float,
    cfg: GflConfig | None = None,
) -> np.ndarray:
    """Denoise every subject's image, then run voxelwise least squares.

    Returns the (p, M) coefficient maps.
    """
    smoothed = np.empty_like(data.Y)
    for i in range(data.n):
        smoothed[i] = gfl_solve(g, data.Y[i], lam, cfg).value
    return ols_fit(Dataset(X=data.X, Y=smoothed, shape=data.shape)).Gamma


def ols_tv_fit(
    data: Dataset,
    g: IncidenceGraph,
    lam: float,
    cfg: GflConfig | None = None,
) -> np.ndarray:
    """Voxelwise least squares first, then denoise each coefficient map.

    Returns the (p, M) coefficient maps.
    """
    Gamma = ols_fit(data).Gamma
    out = np.empty_like(Gamma)
    for j in range(Gamma.shape[0]):
        out[j] = gfl_solve(g, Gamma[j], lam, cfg).value
    return out
