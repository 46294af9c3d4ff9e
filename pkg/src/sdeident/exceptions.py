"""Exception types shared across the package."""


class SdeIdentError(Exception):
    """Base class for all package-specific errors."""


class ModelValidationError(SdeIdentError):
    """A model failed validation; carries the list of violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid model: " + "; ".join(self.violations))


class RepeatedEigenvaluesError(SdeIdentError):
    """Eigenvalues are not pairwise separated beyond the gap tolerance."""


class CommutativityError(SdeIdentError):
    """Drift/diffusion matrices do not commute within tolerance."""


class NonFiniteTrajectoryError(SdeIdentError):
    """A simulated path left the finite range (reports path index and time)."""

    def __init__(self, path_index, time):
        self.path_index = int(path_index)
        self.time = float(time)
        super().__init__(
            f"non-finite state in path {self.path_index} at t={self.time:g}"
        )


class IndefiniteCovarianceError(SdeIdentError):
    """A covariance matrix is indefinite beyond the round-off tolerance."""


class EstimationError(SdeIdentError):
    """Optimizer diverged (non-finite objective) or could not start."""
