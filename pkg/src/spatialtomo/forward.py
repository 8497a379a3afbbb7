"""Forward model: Born probabilities, intensity images and photocount records.

Randomness always comes from an explicit ``numpy.random.Generator``
(PCG64 bit generator, seeded through ``SeedSequence``); there is no hidden
global RNG.
"""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass

import numpy as np

from .measurement import MeasurementSet
from .modes import SampledBasis

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_TOL = 1e-10


def check_density_matrix(rho, d: int | None = None) -> np.ndarray:
    """Validate and return ``rho`` as a complex array.

    Raises ValueError when Hermiticity, unit trace or positivity fail.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if d is not None and rho.shape[0] != d:
        raise ValueError(f"dimension mismatch: expected {d}, got {rho.shape[0]}")
    if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > TRACE_TOL:
        raise ValueError("density matrix does not have unit trace")
    if np.linalg.eigvalsh(rho)[0] < -PSD_TOL:
        raise ValueError("density matrix is not positive semidefinite")
    return rho


def pure_density(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def seeded_rng(seed: int, *keys) -> np.random.Generator:
    """Generator derived from a master seed plus integer or string keys.

    Strings are folded in with CRC32 so that ``(seed, index, purpose)``
    tuples give independent, reproducible streams.
    """
    entropy = [int(seed)]
    for k in keys:
        entropy.append(zlib.crc32(k.encode()) if isinstance(k, str) else int(k))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def born_probabilities(rho, ms: MeasurementSet, clip: bool = True) -> np.ndarray:
    """``p_m = Tr(Pi_m rho)`` for every element; round-off negatives clamp to zero."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (ms.d, ms.d):
        raise ValueError(f"dimension mismatch: rho is {rho.shape}, measurement d={ms.d}")
    v = ms.vectors
    p = np.einsum("mj,jk,mk->m", v.conj(), rho, v).real
    if clip:
        p = np.where(p < 0, 0.0, p)
    return p


def intensity_image(rho, sb: SampledBasis) -> np.ndarray:
    """Intensity density ``sum_jk rho_jk u_j conj(u_k)`` on the grid, shape ``(ny, nx)``."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (sb.d, sb.d):
        raise ValueError(f"dimension mismatch: rho is {rho.shape}, basis d={sb.d}")
    u = sb.flat()
    img = np.einsum("jm,jk,km->m", u, rho, u.conj()).real
    return img.reshape(sb.grid.shape)


def add_read_noise(image: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Additive Gaussian pixel noise, clamped at zero afterwards."""
    if sigma <= 0:
        return image.copy()
    return np.clip(image + rng.normal(0.0, sigma, size=image.shape), 0.0, None)


@dataclass(frozen=True, eq=False)
class CountData:
    """Photocounts aligned with the elements of a MeasurementSet."""

    counts: np.ndarray
    pixels: np.ndarray
    channels: tuple[str, ...]
    seed: int | None = None

    def __post_init__(self):
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")
        if len(self.channels) != len(self.counts) or len(self.pixels) != len(self.counts):
            raise ValueError("counts, pixels and channels must align")

    @property
    def total(self) -> int:
        return int(np.sum(self.counts))

    def frequencies(self) -> np.ndarray:
        n = self.total
        if n == 0:
            raise ValueError("no counts recorded")
        return self.counts / n

    def subset(self, keep) -> CountData:
        ch = np.asarray(self.channels, dtype=object)[keep]
        return CountData(self.counts[keep], self.pixels[keep], tuple(ch), self.seed)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["pixel_index", "channel", "count"])
            for pix, ch, c in zip(self.pixels, self.channels, self.counts):
                writer.writerow([int(pix), ch, int(c)])

    @classmethod
    def from_csv(cls, path) -> CountData:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["pixel_index", "channel", "count"]:
            raise ValueError(f"{path}: expected header pixel_index,channel,count")
        body = rows[1:]
        if not body:
            raise ValueError(f"{path}: no count rows")
        try:
            pixels = np.array([int(r[0]) for r in body])
            counts = np.array([int(r[2]) for r in body])
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}: malformed row ({exc})") from exc
        return cls(counts, pixels, tuple(r[1] for r in body))


def counts_for(ms: MeasurementSet, counts: np.ndarray, seed: int | None = None) -> CountData:
    return CountData(np.asarray(counts, dtype=np.int64), ms.pixels.copy(), tuple(ms.channel_labels()), seed)


def sample_photocounts(p, n_total: int, rng, tolerance: float = 1e-6) -> np.ndarray:
    """Multinomial photocounts for probabilities ``p`` (renormalised if within tolerance).

    ``rng`` is a Generator or an integer seed. Returns an int64 array summing
    to ``n_total``.
    """
    p = np.asarray(p, dtype=float)
    if n_total < 0:
        raise ValueError("total counts must be non-negative")
    if np.any(p < -1e-12):
        raise ValueError("probabilities must be non-negative")
    p = np.clip(p, 0.0, None)
    s = p.sum()
    if s <= 0:
        raise ValueError("probabilities sum to zero")
    if s > 1 + tolerance:
        raise ValueError(f"probabilities sum to {s:.8f} > 1")
    if not isinstance(rng, np.random.Generator):
        rng = seeded_rng(rng)
    if n_total == 0:
        return np.zeros(p.shape, dtype=np.int64)
    return rng.multinomial(n_total, p / s).astype(np.int64)


def simulate_counts(rho, ms: MeasurementSet, n_total: int, rng, seed: int | None = None) -> CountData:
    return counts_for(ms, sample_photocounts(born_probabilities(rho, ms), n_total, rng), seed)


def write_pgm(path, image: np.ndarray) -> None:
    """16-bit binary PGM, maximum value scaled to 65535."""
    img = np.clip(np.asarray(image, dtype=float), 0.0, None)
    peak = img.max()
    scaled = np.zeros(img.shape) if peak <= 0 else img / peak * 65535.0
    data = np.rint(scaled).astype(">u2")
    ny, nx = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n65535\n".encode())
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise ValueError("only binary PGM (P5) is supported")
    nx, ny, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    dtype = ">u2" if maxval > 255 else "u1"
    data = np.frombuffer(raw[pos + 1 :], dtype=dtype, count=nx * ny)
    return data.reshape(ny, nx).astype(float)


def write_image_csv(path, image: np.ndarray) -> None:
    np.savetxt(path, image, delimiter=",", fmt="%.17g")
