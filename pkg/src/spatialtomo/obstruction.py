"""Tomography behind an obstruction (blade, iris or arbitrary stencil).

Only pixels inside the detected region are observed, so the retained POVM
elements sum to ``g <= I`` rather than to the identity. With ``A^H A = g``
(Cholesky), the elements ``A^-H Pi A^-1`` form a proper POVM for the
collapsed state ``A rho A^H / Tr(rho g)``; the original state follows by
inverting that map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ObstructionTooSevereError
from .estimation import ApgOptions, linear_inversion, max_likelihood_apg
from .measurement import GellMannBasis, MeasurementSet, gell_mann_basis
from .modes import PixelGrid

G_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class ObstructionMask:
    """Which pixels survive an obstruction.

    ``param`` is in waist units measured from ``center``: a blade keeps
    ``x < center_x + param * waist``; an iris keeps
    ``|r - center| <= param * waist``. ``custom`` uses the boolean image
    ``stencil`` directly. Membership is decided at the pixel centre.
    """

    kind: str
    grid: PixelGrid
    param: float | None = None
    waist: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)
    stencil: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("blade", "iris", "custom", "none"):
            raise ValueError(f"unknown mask kind {self.kind!r}")
        if self.kind in ("blade", "iris") and self.param is None:
            raise ValueError(f"{self.kind} mask needs a parameter")
        if self.kind == "iris" and self.param < 0:
            raise ValueError("iris radius must be non-negative")
        if self.kind == "custom":
            if self.stencil is None or self.stencil.shape != self.grid.shape:
                raise ValueError("custom mask needs a boolean stencil matching the grid")

    @classmethod
    def blade(cls, grid, x_b, waist=1.0, center=(0.0, 0.0)):
        return cls("blade", grid, float(x_b), waist, tuple(center))

    @classmethod
    def iris(cls, grid, radius, waist=1.0, center=(0.0, 0.0)):
        return cls("iris", grid, float(radius), waist, tuple(center))

    @classmethod
    def custom(cls, grid, stencil):
        return cls("custom", grid, stencil=np.asarray(stencil, dtype=bool))

    @classmethod
    def full(cls, grid):
        return cls("none", grid)

    def keep(self) -> np.ndarray:
        """Boolean image ``(ny, nx)`` of kept pixels."""
        xx, yy = self.grid.mesh()
        if self.kind == "blade":
            return xx < self.center[0] + self.param * self.waist
        if self.kind == "iris":
            r = np.hypot(xx - self.center[0], yy - self.center[1])
            return r <= self.param * self.waist
        if self.kind == "custom":
            return self.stencil.copy()
        return np.ones(self.grid.shape, dtype=bool)


def apply_mask(ms: MeasurementSet, mask: ObstructionMask) -> MeasurementSet:
    """Drop the elements whose pixel is blocked; the same stencil applies to every channel."""
    if ms.grid is not None and ms.grid != mask.grid:
        raise ValueError("mask grid does not match measurement grid")
    kept = mask.keep().ravel()[ms.pixels]
    if not np.any(kept):
        raise ValueError("mask blocks every pixel")
    return ms.subset(kept)


def g_operator(restricted: MeasurementSet) -> np.ndarray:
    """Sum of the retained POVM elements."""
    if len(restricted) == 0:
        raise ValueError("empty measurement set")
    g = restricted.total()
    return (g + g.conj().T) / 2


def cholesky_factor(g, floor: float = G_FLOOR) -> np.ndarray:
    """Upper-triangular ``A`` with ``A^H A = g``.

    Raises ObstructionTooSevereError if the smallest eigenvalue of ``g`` is
    at or below ``floor``.
    """
    g = np.asarray(g, dtype=complex)
    lam_min = float(np.linalg.eigvalsh(g)[0])
    if lam_min <= floor:
        raise ObstructionTooSevereError(lam_min, floor)
    lower = np.linalg.cholesky(g)
    return lower.conj().T


def transformed_povm(restricted: MeasurementSet, A) -> MeasurementSet:
    """Elements ``A^-H Pi_m A^-1``; each rank-one vector maps to ``A^-H v``."""
    A = np.asarray(A, dtype=complex)
    if not np.all(np.isfinite(A)) or abs(np.linalg.det(A)) == 0:
        raise np.linalg.LinAlgError("A is singular")
    w = np.linalg.solve(A.conj().T, restricted.vectors.T)
    return restricted.with_vectors(w.T)


def collapse_state(rho, A, floor: float = G_FLOOR) -> np.ndarray:
    """``A rho A^H / Tr(rho g)``: the state conditioned on a detection."""
    rho = np.asarray(rho, dtype=complex)
    A = np.asarray(A, dtype=complex)
    out = A @ rho @ A.conj().T
    p_det = np.trace(out).real
    if p_det <= floor:
        raise ValueError(f"detection probability {p_det:.3e} is too small")
    out = out / p_det
    return (out + out.conj().T) / 2


def uncollapse_state(rho_tilde, A) -> np.ndarray:
    """Invert :func:`collapse_state`: ``A^-1 rho~ A^-H`` renormalised to unit trace."""
    A = np.asarray(A, dtype=complex)
    a_inv = np.linalg.inv(A)
    out = a_inv @ np.asarray(rho_tilde, dtype=complex) @ a_inv.conj().T
    out = out / np.trace(out).real
    return (out + out.conj().T) / 2


@dataclass
class ObstructedEstimate:
    rho: np.ndarray
    rho_tilde: np.ndarray
    g: np.ndarray
    A: np.ndarray


def obstructed_tomography(
    counts,
    restricted: MeasurementSet,
    gm: GellMannBasis | None = None,
    estimator: str = "linear",
    floor: float = G_FLOOR,
    apg_options: ApgOptions | None = None,
) -> ObstructedEstimate:
    """Estimate the collapsed state against the restored POVM, then un-collapse.

    ``counts`` are the photocounts (or any non-negative weights) on the
    retained elements; only their relative values matter.
    """
    gm = gell_mann_basis(restricted.d) if gm is None else gm
    n = np.asarray(getattr(counts, "counts", counts), dtype=float)
    if n.shape != (len(restricted),):
        raise ValueError("counts do not align with the restricted measurement set")
    g = g_operator(restricted)
    A = cholesky_factor(g, floor)
    tms = transformed_povm(restricted, A)
    if estimator == "linear":
        total = n.sum()
        if total <= 0:
            raise ValueError("no detections in the unobstructed region")
        rho_t = linear_inversion(n / total, tms, gm)
    elif estimator == "ml":
        rho_t = max_likelihood_apg(n, tms, apg_options, init=None).rho
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    return ObstructedEstimate(uncollapse_state(rho_t, A), rho_t, g, A)
