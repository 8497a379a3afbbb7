"""Exception hierarchy shared by the reconstruction pipeline."""


class TomographyError(Exception):
    """Base class for numerical failures in the pipeline."""


class InformationallyIncompleteError(TomographyError):
    """The tomography matrix does not have full column rank."""

    def __init__(self, rank: int, required: int):
        self.rank = rank
        self.required = required
        super().__init__(
            f"measurement is informationally incomplete: rank {rank} < {required}"
        )


class ObstructionTooSevereError(TomographyError):
    """The detected-region operator g is too close to singular."""

    def __init__(self, min_eigenvalue: float, floor: float):
        self.min_eigenvalue = min_eigenvalue
        self.floor = floor
        super().__init__(
            f"obstruction too severe: min eigenvalue of g is {min_eigenvalue:.3e} "
            f"(floor {floor:.1e})"
        )


class GeometryError(TomographyError):
    """Moment data inconsistent with a beam of the stated order."""


class DegenerateEigenvalueError(TomographyError):
    """The leading eigenvalue is degenerate so the eigenvector is ambiguous."""


class ConvergenceError(TomographyError):
    """An iterative solver produced a non-finite objective."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""
