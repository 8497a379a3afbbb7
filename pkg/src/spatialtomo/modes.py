"""Hermite-Gaussian and Laguerre-Gaussian mode functions on pixel grids.

Coordinates are dimensionless multiples of a unit length. A pixel integral
of ``f`` is approximated everywhere by the midpoint rule
``f(pixel centre) * pixel_area``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MAX_ORDER = 30


def hermite_polynomial(n: int, x):
    """Physicists' Hermite polynomial H_n(x) by upward recurrence.

    Accepts scalars or arrays; returns the same shape as ``x``.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if n == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    h = 2.0 * x
    for k in range(2, n + 1):
        h_prev, h = h, 2.0 * x * h - 2.0 * (k - 1) * h_prev
    return h if h.ndim else float(h)


def laguerre_polynomial(p: int, alpha: int, x):
    """Generalized Laguerre polynomial L_p^alpha(x) by upward recurrence."""
    if p < 0 or alpha < 0:
        raise ValueError("p and alpha must be non-negative")
    x = np.asarray(x, dtype=float)
    l_prev = np.ones_like(x)
    if p == 0:
        return l_prev if l_prev.ndim else float(l_prev)
    l_cur = 1.0 + alpha - x
    for k in range(1, p):
        l_prev, l_cur = l_cur, ((2 * k + 1 + alpha - x) * l_cur - (k + alpha) * l_prev) / (k + 1)
    return l_cur if l_cur.ndim else float(l_cur)


def hg_norm(m: int, n: int, w: float) -> float:
    return math.sqrt(2.0 / (math.pi * w * w) / (2.0 ** (m + n) * math.factorial(m) * math.factorial(n)))


def lg_norm(p: int, l: int, w: float) -> float:
    l = abs(l)
    return math.sqrt(2.0 * math.factorial(p) / (math.pi * w * w * math.factorial(p + l)))


def evaluate_hg(m: int, n: int, w: float, r0, x, y):
    """Unit-norm HG_mn evaluated at ``(x, y)`` for a beam centred on ``r0``.

    The result is real; ``x`` and ``y`` broadcast against each other.
    """
    if w <= 0:
        raise ValueError("waist must be positive")
    xs = (np.asarray(x, dtype=float) - r0[0]) / w
    ys = (np.asarray(y, dtype=float) - r0[1]) / w
    envelope = np.exp(-(xs * xs + ys * ys))
    s2 = math.sqrt(2.0)
    return hg_norm(m, n, w) * hermite_polynomial(m, s2 * xs) * hermite_polynomial(n, s2 * ys) * envelope


def evaluate_lg(p: int, l: int, w: float, r0, x, y):
    """Unit-norm LG_pl (radial order ``p``, topological charge ``l``).

    Includes the azimuthal phase ``exp(i l phi)``; complex-valued.
    """
    if w <= 0:
        raise ValueError("waist must be positive")
    xs = (np.asarray(x, dtype=float) - r0[0]) / w
    ys = (np.asarray(y, dtype=float) - r0[1]) / w
    rho2 = xs * xs + ys * ys
    radial = (2.0 * rho2) ** (abs(l) / 2.0) * laguerre_polynomial(p, abs(l), 2.0 * rho2) * np.exp(-rho2)
    if l == 0:
        phase = 1.0
    else:
        # (x + i y)^|l| / r^|l| avoids arctan branch handling
        z = (xs + 1j * ys) if l > 0 else (xs - 1j * ys)
        r = np.sqrt(rho2)
        with np.errstate(invalid="ignore", divide="ignore"):
            phase = np.where(r > 0, (z / np.where(r > 0, r, 1.0)) ** abs(l), 1.0)
    return lg_norm(p, l, w) * radial * phase


@dataclass(frozen=True)
class PixelGrid:
    """Rectangular camera grid. Pixel ``(iy, ix)`` has flat index ``iy * nx + ix``."""

    nx: int
    ny: int
    extent_x: float = 12.0
    extent_y: float = 12.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs at least 2 pixels per axis")
        if self.extent_x <= 0 or self.extent_y <= 0:
            raise ValueError("grid extents must be positive")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def square(cls, n: int, extent: float = 12.0, origin=(0.0, 0.0)) -> PixelGrid:
        return cls(n, n, extent, extent, tuple(origin))

    @property
    def dx(self) -> float:
        return self.extent_x / self.nx

    @property
    def dy(self) -> float:
        return self.extent_y / self.ny

    @property
    def pixel_area(self) -> float:
        return self.dx * self.dy

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def x(self) -> np.ndarray:
        return self.origin[0] - self.extent_x / 2 + (np.arange(self.nx) + 0.5) * self.dx

    @property
    def y(self) -> np.ndarray:
        return self.origin[1] - self.extent_y / 2 + (np.arange(self.ny) + 0.5) * self.dy

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Pixel-centre coordinates, each of shape ``(ny, nx)``."""
        return np.meshgrid(self.x, self.y)

    def coordinates(self) -> np.ndarray:
        """Flat ``(nx*ny, 2)`` array of pixel centres in flat-index order."""
        xx, yy = self.mesh()
        return np.column_stack([xx.ravel(), yy.ravel()])

    def to_dict(self) -> dict:
        return {
            "nx": self.nx,
            "ny": self.ny,
            "extent_x": self.extent_x,
            "extent_y": self.extent_y,
            "origin": list(self.origin),
        }


@dataclass(frozen=True)
class ModeBasis:
    """An ordered list of transverse modes sharing waist and centre.

    ``family`` is ``"hg"`` (entries are ``(m, n)``) or ``"lg"`` (entries are
    ``(p, l)``). Use :meth:`hg_fixed_order` for the order-N subspace, whose
    j-th element (0-based) is ``HG_{j, N-j}``.
    """

    family: str
    modes: tuple[tuple[int, int], ...]
    waist: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)
    fixed_order: int | None = field(default=None)

    def __post_init__(self):
        if self.family not in ("hg", "lg"):
            raise ValueError(f"unknown mode family {self.family!r}")
        if self.waist <= 0:
            raise ValueError("waist must be positive")
        modes = tuple((int(a), int(b)) for a, b in self.modes)
        if len(set(modes)) != len(modes):
            raise ValueError("basis modes must be distinct")
        for a, b in modes:
            order = a + b if self.family == "hg" else 2 * a + abs(b)
            if a < 0 or (self.family == "hg" and b < 0):
                raise ValueError(f"invalid mode indices {(a, b)}")
            if order > MAX_ORDER:
                raise ValueError(f"mode order {order} exceeds supported maximum {MAX_ORDER}")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @classmethod
    def hg_fixed_order(cls, order: int, waist: float = 1.0, center=(0.0, 0.0)) -> ModeBasis:
        if order < 0:
            raise ValueError("order must be non-negative")
        modes = tuple((j, order - j) for j in range(order + 1))
        return cls("hg", modes, waist, tuple(center), fixed_order=order)

    @classmethod
    def lg_list(cls, modes: Sequence[Sequence[int]], waist: float = 1.0, center=(0.0, 0.0)) -> ModeBasis:
        return cls("lg", tuple(tuple(m) for m in modes), waist, tuple(center))

    @property
    def d(self) -> int:
        return len(self.modes)

    @property
    def is_fixed_order_hg(self) -> bool:
        return self.family == "hg" and self.fixed_order is not None

    @property
    def orders(self) -> list[int]:
        if self.family == "hg":
            return [m + n for m, n in self.modes]
        return [2 * p + abs(l) for p, l in self.modes]

    def evaluate(self, x, y) -> np.ndarray:
        """Stack of mode values, shape ``(d,) + broadcast(x, y).shape``."""
        fn = evaluate_hg if self.family == "hg" else evaluate_lg
        vals = [fn(a, b, self.waist, self.center, x, y) for a, b in self.modes]
        return np.stack(np.broadcast_arrays(*vals)).astype(complex)

    def with_geometry(self, waist: float | None = None, center=None) -> ModeBasis:
        return ModeBasis(
            self.family,
            self.modes,
            self.waist if waist is None else waist,
            self.center if center is None else tuple(center),
            self.fixed_order,
        )

    def to_dict(self) -> dict:
        out = {"family": self.family, "waist": self.waist, "center": list(self.center)}
        if self.is_fixed_order_hg:
            out["order"] = self.fixed_order
        else:
            out["modes"] = [list(m) for m in self.modes]
        return out


@dataclass(frozen=True, eq=False)
class SampledBasis:
    """Basis functions evaluated at every pixel centre; ``values`` is ``(d, ny, nx)``."""

    grid: PixelGrid
    basis: ModeBasis
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.basis.d,) + self.grid.shape:
            raise ValueError("sampled values do not match basis and grid")
        self.values.setflags(write=False)

    @property
    def d(self) -> int:
        return self.basis.d

    def flat(self) -> np.ndarray:
        """Values as ``(d, n_pixels)`` in flat pixel order."""
        return self.values.reshape(self.d, -1)

    def gram(self) -> np.ndarray:
        """Discrete Gram matrix ``G_jk = sum conj(u_j) u_k * area``."""
        u = self.flat()
        return (u.conj() @ u.T) * self.grid.pixel_area

    def norms(self) -> np.ndarray:
        return np.real(np.diag(self.gram()))

    def to_csv(self, path) -> None:
        coords = self.grid.coordinates()
        u = self.flat()
        header = ["x", "y"]
        for j in range(1, self.d + 1):
            header += [f"re_u{j}", f"im_u{j}"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(coords.shape[0]):
                row = [repr(float(coords[i, 0])), repr(float(coords[i, 1]))]
                for j in range(self.d):
                    row += [repr(float(u[j, i].real)), repr(float(u[j, i].imag))]
                writer.writerow(row)


def sample_basis(basis: ModeBasis, grid: PixelGrid) -> SampledBasis:
    """Evaluate every basis function at the pixel centres of ``grid``."""
    if basis.d == 0:
        raise ValueError("basis is empty")
    xx, yy = grid.mesh()
    return SampledBasis(grid, basis, basis.evaluate(xx, yy))
