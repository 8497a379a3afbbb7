"""Figures of merit, random-state ensembles and bootstrap intervals."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .forward import CountData, seeded_rng


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else seeded_rng(seed)


def _clip_roundoff(w: np.ndarray) -> np.ndarray:
    # eigenvalues at round-off level would otherwise leak through the square root
    cut = w.size * np.finfo(float).eps * max(float(np.max(np.abs(w))), 1e-300)
    return np.where(w > cut, w, 0.0)


def psd_sqrt(a) -> np.ndarray:
    w, v = np.linalg.eigh((a + a.conj().T) / 2)
    return (v * np.sqrt(_clip_roundoff(w))) @ v.conj().T


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``.

    Evaluated as the squared nuclear norm of ``sqrt(rho) sqrt(sigma)``, which
    avoids a second square root of round-off eigenvalues.
    """
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape or rho.ndim != 2:
        raise ValueError("states must be square matrices of equal dimension")
    sv = np.linalg.svd(psd_sqrt(rho) @ psd_sqrt(sigma), compute_uv=False)
    return float(min(np.sum(sv) ** 2, 1.0))


def pure_fidelity(psi, sigma) -> float:
    """``<psi|sigma|psi>`` for a normalised ket ``psi``."""
    psi = np.asarray(psi, dtype=complex)
    return float(np.vdot(psi, np.asarray(sigma) @ psi).real)


def random_pure_state(d: int, seed) -> np.ndarray:
    """Haar-random unit vector (normalised complex Gaussian)."""
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = _rng(seed)
    z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return z / np.linalg.norm(z)


def random_mixed_state(d: int, seed) -> np.ndarray:
    """Hilbert-Schmidt random density matrix ``G G^H / Tr(G G^H)``."""
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = _rng(seed)
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = g @ g.conj().T
    rho = rho / np.trace(rho).real
    return (rho + rho.conj().T) / 2


def random_unitary(d: int, seed) -> np.ndarray:
    """Haar-random unitary via QR with the phase correction."""
    rng = _rng(seed)
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


@dataclass
class BootstrapReport:
    estimate: float
    lower: float
    upper: float
    level: float
    resamples: int
    failures: int = 0

    def to_json(self) -> dict:
        return asdict(self)


def bootstrap_ci(
    counts: CountData,
    statistic: Callable[[CountData], float],
    B: int = 10_000,
    level: float = 0.95,
    seed: int = 0,
) -> BootstrapReport:
    """Percentile bootstrap over multinomial resamples of the photocounts.

    Resample ``b`` draws ``N`` counts from the empirical frequencies with a
    generator derived from ``(seed, b)``. Resamples on which ``statistic``
    raises are dropped and counted in ``failures``.
    """
    if B < 100:
        raise ValueError("at least 100 resamples are required")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    n = counts.total
    if n <= 0:
        raise ValueError("no counts to resample")
    freqs = counts.frequencies()
    estimate = float(statistic(counts))
    values, failures = [], 0
    for b in range(B):
        rng = seeded_rng(seed, b, "bootstrap")
        resampled = CountData(rng.multinomial(n, freqs), counts.pixels, counts.channels, counts.seed)
        try:
            values.append(float(statistic(resampled)))
        except Exception:  # noqa: BLE001 - any failing resample is dropped
            failures += 1
    if not values:
        raise RuntimeError("statistic failed on every resample")
    alpha = (1 - level) / 2
    lo, hi = np.quantile(values, [alpha, 1 - alpha])
    return BootstrapReport(estimate, float(lo), float(hi), level, len(values), failures)


def bootstrap_mean_ci(values, B: int = 10_000, level: float = 0.95, seed: int = 0) -> BootstrapReport:
    """Percentile bootstrap interval for the mean of per-state values."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("no values")
    rng = seeded_rng(seed, "mean-bootstrap")
    idx = rng.integers(0, values.size, size=(B, values.size))
    means = values[idx].mean(axis=1)
    alpha = (1 - level) / 2
    lo, hi = np.quantile(means, [alpha, 1 - alpha])
    return BootstrapReport(float(values.mean()), float(lo), float(hi), level, B)
