"""Gell-Mann operator basis, pixel POVMs and the tomography matrix.

Every POVM element produced here is rank one, so a :class:`MeasurementSet`
stores one vector ``v_m`` per outcome with ``Pi_m = v_m v_m^dagger``; the
matrix element ``(Pi_m)_jk = v_j conj(v_k)`` equals ``conj(u_j) u_k * area``
for a direct pixel.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from typing import Sequence

import numpy as np

from .modes import ModeBasis, PixelGrid, SampledBasis

RANK_TOL = 1e-8
DARK_THRESHOLD = 1e-30


@dataclass(frozen=True, eq=False)
class GellMannBasis:
    """Orthonormal traceless Hermitian basis, ordered X block, Y block, Z block."""

    d: int
    operators: np.ndarray
    labels: tuple[str, ...]

    def __len__(self) -> int:
        return self.operators.shape[0]

    def index(self, label: str) -> int:
        return self.labels.index(label)


@lru_cache(maxsize=None)
def gell_mann_basis(d: int) -> GellMannBasis:
    """Generalized Gell-Mann matrices normalised to ``Tr(w_a w_b) = delta_ab``.

    ``Y_jk`` follows ``i(|u_j><u_k| - |u_k><u_j|)/sqrt(2)``. Labels are
    1-based, e.g. ``"X12"``, ``"Y13"``, ``"Z2"``.
    """
    if d < 2:
        raise ValueError("Gell-Mann basis needs d >= 2")
    s2 = math.sqrt(2.0)
    pairs = [(j, k) for j in range(d) for k in range(j + 1, d)]
    ops, labels = [], []
    for j, k in pairs:
        op = np.zeros((d, d), complex)
        op[j, k] = op[k, j] = 1 / s2
        ops.append(op)
        labels.append(f"X{j + 1}{k + 1}" if d < 10 else f"X{j + 1},{k + 1}")
    for j, k in pairs:
        op = np.zeros((d, d), complex)
        op[j, k] = 1j / s2
        op[k, j] = -1j / s2
        ops.append(op)
        labels.append(f"Y{j + 1}{k + 1}" if d < 10 else f"Y{j + 1},{k + 1}")
    for j in range(1, d):
        diag = np.zeros(d)
        diag[:j] = 1.0
        diag[j] = -j
        ops.append(np.diag(diag / math.sqrt(j + j * j)).astype(complex))
        labels.append(f"Z{j}")
    operators = np.array(ops)
    operators.setflags(write=False)
    return GellMannBasis(d, operators, tuple(labels))


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """A list of rank-one POVM elements with pixel and channel bookkeeping.

    Attributes:
        vectors: ``(M, d)`` complex; element ``m`` is ``outer(v_m, conj(v_m))``.
        pixels: flat pixel index of each element on ``grid``.
        channel_ids: index into ``channel_tags`` for each element.
        channel_tags: e.g. ``("direct", "converted(0.785398)")``.
        channel_weights: mixing probability of each channel.
    """

    vectors: np.ndarray
    pixels: np.ndarray
    channel_ids: np.ndarray
    channel_tags: tuple[str, ...]
    channel_weights: tuple[float, ...]
    grid: PixelGrid | None = None
    basis: ModeBasis | None = None
    thetas: tuple[float | None, ...] = field(default=())

    def __post_init__(self):
        if self.vectors.ndim != 2:
            raise ValueError("vectors must be a 2-D array")
        m = self.vectors.shape[0]
        if self.pixels.shape != (m,) or self.channel_ids.shape != (m,):
            raise ValueError("pixel/channel bookkeeping does not match element count")
        if not self.thetas:
            object.__setattr__(self, "thetas", tuple(None for _ in self.channel_tags))
        for arr in (self.vectors, self.pixels, self.channel_ids):
            arr.setflags(write=False)

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def elements(self) -> np.ndarray:
        """Dense ``(M, d, d)`` stack of POVM matrices."""
        v = self.vectors
        return v[:, :, None] * v.conj()[:, None, :]

    @cached_property
    def traces(self) -> np.ndarray:
        return np.sum(np.abs(self.vectors) ** 2, axis=1)

    def total(self) -> np.ndarray:
        """Sum of all elements."""
        return self.vectors.T @ self.vectors.conj()

    @cached_property
    def T(self) -> np.ndarray:
        return build_T(self, gell_mann_basis(self.d))[0]

    @cached_property
    def singular_values(self) -> np.ndarray:
        return measurement_singular_values(self)

    @property
    def rank(self) -> int:
        s = self.singular_values
        return int(np.sum(s > RANK_TOL * s[0])) if s.size and s[0] > 0 else 0

    def subset(self, keep: np.ndarray) -> MeasurementSet:
        """Elements selected by a boolean mask or index array (order preserved)."""
        return replace(
            self,
            vectors=self.vectors[keep],
            pixels=self.pixels[keep],
            channel_ids=self.channel_ids[keep],
        )

    def with_vectors(self, vectors: np.ndarray) -> MeasurementSet:
        return replace(self, vectors=np.ascontiguousarray(vectors))

    def channel_labels(self) -> list[str]:
        return [self.channel_tags[c] for c in self.channel_ids]

    def to_json(self) -> dict:
        """JSON document with flattened complex matrices as ``[re, im]`` pairs."""
        elems = self.elements.reshape(len(self), -1)
        return {
            "d": self.d,
            "channels": list(self.channel_tags),
            "weights": list(self.channel_weights),
            "elements": [
                {
                    "pixel": int(self.pixels[m]),
                    "channel": self.channel_tags[self.channel_ids[m]],
                    "matrix": [[float(z.real), float(z.imag)] for z in elems[m]],
                }
                for m in range(len(self))
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> MeasurementSet:
        d = int(doc["d"])
        tags = tuple(doc["channels"])
        mats, pixels, ids = [], [], []
        for e in doc["elements"]:
            flat = np.array([complex(re, im) for re, im in e["matrix"]])
            mats.append(flat.reshape(d, d))
            pixels.append(e["pixel"])
            ids.append(tags.index(e["channel"]))
        vectors = np.array([_rank_one_factor(mat) for mat in mats]).reshape(-1, d)
        return cls(vectors, np.array(pixels, int), np.array(ids, int), tags, tuple(doc["weights"]))


def _rank_one_factor(mat: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(mat)
    if w[:-1].size and np.max(np.abs(w[:-1])) > 1e-10 * max(abs(w[-1]), 1e-300):
        raise ValueError("only rank-one POVM elements are supported")
    return v[:, -1] * math.sqrt(max(w[-1], 0.0))


def pixel_povm(sb: SampledBasis, drop_dark: bool = False) -> MeasurementSet:
    """Direct-channel POVM: one element per pixel, ``Pi_jk = conj(u_j) u_k * area``.

    With ``drop_dark`` pixels whose trace is below 1e-30 are omitted.
    """
    u = sb.flat()
    vectors = np.ascontiguousarray(u.conj().T) * math.sqrt(sb.grid.pixel_area)
    pixels = np.arange(sb.grid.size)
    if drop_dark:
        keep = np.sum(np.abs(vectors) ** 2, axis=1) >= DARK_THRESHOLD
        vectors, pixels = vectors[keep], pixels[keep]
    return MeasurementSet(
        vectors=vectors,
        pixels=pixels,
        channel_ids=np.zeros(len(pixels), int),
        channel_tags=("direct",),
        channel_weights=(1.0,),
        grid=sb.grid,
        basis=sb.basis,
        thetas=(None,),
    )


def converted_povm(ms: MeasurementSet, theta: float) -> MeasurementSet:
    """Apply the astigmatic converter: element ``(j, k)`` gains ``exp(i(k-j)theta)``.

    Only valid for a fixed-order HG basis, where the converter is diagonal.
    """
    if ms.basis is None or not ms.basis.is_fixed_order_hg:
        raise ValueError("mode converter requires a fixed-order Hermite-Gaussian basis")
    if ms.channel_tags != ("direct",):
        raise ValueError("converted_povm expects a single direct channel")
    phases = np.exp(-1j * theta * np.arange(ms.d))
    return replace(
        ms,
        vectors=ms.vectors * phases[None, :],
        channel_tags=(f"converted({theta:.6f})",),
        thetas=(float(theta),),
    )


def combine_channels(sets: Sequence[MeasurementSet], weights: Sequence[float] | None = None) -> MeasurementSet:
    """Concatenate channels, scaling each by its mixing probability."""
    if not sets:
        raise ValueError("no measurement sets given")
    if weights is None:
        weights = [1.0 / len(sets)] * len(sets)
    weights = [float(w) for w in weights]
    if len(weights) != len(sets):
        raise ValueError("one weight per measurement set is required")
    if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-12:
        raise ValueError("channel weights must be non-negative and sum to 1")
    d = sets[0].d
    if any(s.d != d for s in sets):
        raise ValueError("measurement sets have different dimensions")
    vectors, pixels, ids, tags, cw, thetas = [], [], [], [], [], []
    for s, w in zip(sets, weights):
        vectors.append(s.vectors * math.sqrt(w))
        pixels.append(s.pixels)
        ids.append(s.channel_ids + len(tags))
        tags.extend(s.channel_tags)
        cw.extend(w * c for c in s.channel_weights)
        thetas.extend(s.thetas)
    return MeasurementSet(
        vectors=np.concatenate(vectors),
        pixels=np.concatenate(pixels),
        channel_ids=np.concatenate(ids),
        channel_tags=tuple(tags),
        channel_weights=tuple(cw),
        grid=sets[0].grid,
        basis=sets[0].basis,
        thetas=tuple(thetas),
    )


def two_channel_povm(sb: SampledBasis, theta: float, weights=(0.5, 0.5), drop_dark: bool = False) -> MeasurementSet:
    """Direct plus converted channel, the usual two-camera measurement."""
    direct = pixel_povm(sb, drop_dark=drop_dark)
    return combine_channels([direct, converted_povm(direct, theta)], weights)


def _t_block(vectors: np.ndarray, gm: GellMannBasis) -> np.ndarray:
    # Tr(v v^H w) = sum_jk v_j conj(v_k) w_kj
    d = gm.d
    outer = (vectors[:, :, None] * vectors.conj()[:, None, :]).reshape(len(vectors), d * d)
    ops_t = np.transpose(gm.operators, (0, 2, 1)).reshape(len(gm), d * d).T
    block = outer @ ops_t
    return block


def build_T(ms: MeasurementSet, gm: GellMannBasis, chunk: int = 65536) -> tuple[np.ndarray, np.ndarray]:
    """Tomography matrix ``T_mn = Tr(Pi_m w_n)`` and the trace vector ``Tr Pi_m``."""
    if gm.d != ms.d:
        raise ValueError(f"dimension mismatch: basis d={gm.d}, measurement d={ms.d}")
    T = np.empty((len(ms), len(gm)))
    resid = 0.0
    for start in range(0, len(ms), chunk):
        block = _t_block(ms.vectors[start : start + chunk], gm)
        if block.size:
            resid = max(resid, float(np.max(np.abs(block.imag))))
        T[start : start + chunk] = block.real
    scale = float(np.max(ms.traces)) if len(ms) else 1.0
    if resid > 1e-12 * max(scale, 1e-300) and resid > 1e-14:
        raise ArithmeticError(f"tomography matrix has imaginary residue {resid:.2e}")
    return T, ms.traces.copy()


def measurement_singular_values(ms: MeasurementSet, chunk: int = 32768) -> np.ndarray:
    """Singular values of T, streamed through a blocked QR so T is never stored whole."""
    gm = gell_mann_basis(ms.d)
    n = len(gm)
    if len(ms) * n <= 4_000_000:
        return np.linalg.svd(build_T(ms, gm)[0], compute_uv=False)
    r = np.zeros((0, n))
    for start in range(0, len(ms), chunk):
        block = _t_block(ms.vectors[start : start + chunk], gm).real
        r = np.linalg.qr(np.vstack([r, block]), mode="r")
    return np.linalg.svd(r, compute_uv=False)


def numerical_rank(T: np.ndarray, rel_tol: float = RANK_TOL) -> int:
    """Number of singular values above ``rel_tol`` times the largest."""
    if not 0 < rel_tol < 1:
        raise ValueError("rel_tol must lie in (0, 1)")
    T = np.asarray(T)
    if T.size == 0:
        raise ValueError("empty matrix has no rank")
    s = np.linalg.svd(T, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


def rank_from_singular_values(s: np.ndarray, rel_tol: float = RANK_TOL) -> int:
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


def write_t_csv(path, T: np.ndarray, traces: np.ndarray, gm: GellMannBasis) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "trace", *gm.labels])
        for i in range(T.shape[0]):
            writer.writerow([i, repr(float(traces[i]))] + [repr(float(t)) for t in T[i]])


def write_singular_values_csv(path, s: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "singular_value"])
        for i, v in enumerate(s):
            writer.writerow([i, repr(float(v))])


def save_measurement_set(ms: MeasurementSet, path) -> None:
    with open(path, "w") as fh:
        json.dump(ms.to_json(), fh)
