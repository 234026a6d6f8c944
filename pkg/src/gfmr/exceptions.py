"""Exception and warning types shared across the package."""


class GfmrError(Exception):
    """Base class for package-specific errors."""


class ShapeMismatchError(GfmrError, ValueError):
    """Inputs whose dimensions do not line up with each other."""


class RankDeficiencyError(GfmrError, ValueError):
    """Design matrix without full column rank."""


class GflConvergenceWarning(RuntimeWarning):
    """A graph-fused-lasso solve stopped before reaching its tolerance."""
