"""State estimators: linear inversion and accelerated projected-gradient ML."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, DegenerateEigenvalueError, InformationallyIncompleteError
from .forward import CountData
from .measurement import RANK_TOL, GellMannBasis, MeasurementSet, gell_mann_basis

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-300


def bloch_to_rho(theta, gm: GellMannBasis) -> np.ndarray:
    """``I/d + sum_n theta_n w_n``: Hermitian with unit trace, not necessarily PSD."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(gm),):
        raise ValueError(f"Bloch vector needs {len(gm)} entries, got {theta.shape}")
    return np.eye(gm.d) / gm.d + np.tensordot(theta, gm.operators, axes=1)


def rho_to_bloch(rho, gm: GellMannBasis) -> np.ndarray:
    """``theta_n = Tr(rho w_n)``."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("rho must be square")
    if rho.shape[0] != gm.d:
        raise ValueError("dimension mismatch")
    return np.einsum("njk,kj->n", gm.operators, rho).real


def project_eigenvalues(mu) -> np.ndarray:
    """Subtract-and-clip: nearest probability vector to eigenvalues ``mu``.

    Walks from the smallest eigenvalue upward, zeroing any that would go
    negative and spreading its deficit evenly over the remaining ones.
    Output order matches the input.
    """
    mu = np.asarray(mu, dtype=float)
    order = np.argsort(mu)[::-1]
    lam = mu[order].copy()
    acc = 0.0
    d = lam.size
    i = d
    while i > 0:
        if lam[i - 1] + acc / i < 0:
            acc += lam[i - 1]
            lam[i - 1] = 0.0
            i -= 1
        else:
            break
    lam[:i] += acc / i
    out = np.empty(d)
    out[order] = lam
    return out


def project_to_density(H) -> np.ndarray:
    """Frobenius-nearest density matrix to a Hermitian ``H``.

    A trace other than one is first removed by a uniform eigenvalue shift
    (the orthogonal projection onto the unit-trace plane), so this is the
    exact Euclidean projection for any Hermitian input.
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("input must be square")
    scale = max(1.0, float(np.max(np.abs(H))))
    if np.max(np.abs(H - H.conj().T)) > 1e-10 * scale:
        raise ValueError("input is not Hermitian")
    H = (H + H.conj().T) / 2
    w, v = np.linalg.eigh(H)
    w = w + (1.0 - w.sum()) / w.size
    lam = project_eigenvalues(w)
    rho = (v * lam) @ v.conj().T
    return (rho + rho.conj().T) / 2


def linear_inversion(
    freqs,
    ms: MeasurementSet,
    gm: GellMannBasis | None = None,
    allow_incomplete: bool = False,
    rel_tol: float = RANK_TOL,
) -> np.ndarray:
    """Least-squares Bloch vector from frequencies, projected to a density matrix.

    Raises InformationallyIncompleteError when T is rank deficient, unless
    ``allow_incomplete`` is set, in which case the minimum-norm solution is
    used (unobserved Bloch components are set to zero).
    """
    gm = gell_mann_basis(ms.d) if gm is None else gm
    freqs = np.asarray(freqs, dtype=float)
    if freqs.shape != (len(ms),):
        raise ValueError(f"expected {len(ms)} frequencies, got {freqs.shape}")
    s = ms.singular_values
    rank = int(np.sum(s > rel_tol * s[0])) if s[0] > 0 else 0
    if rank < len(gm) and not allow_incomplete:
        raise InformationallyIncompleteError(rank, len(gm))
    total = freqs.sum()
    if total <= 0:
        raise ValueError("frequencies sum to zero")
    if abs(total - 1) > 1e-12:
        log.debug("renormalising frequencies (discarded mass %.3e)", 1 - total)
        freqs = freqs / total
    T = ms.T
    q = freqs - ms.traces / ms.d
    if rank == len(gm):
        theta = scipy.linalg.lstsq(T, q, lapack_driver="gelsy")[0]
    else:
        theta = scipy.linalg.lstsq(T, q, cond=rel_tol, lapack_driver="gelsd")[0]
    return project_to_density(bloch_to_rho(theta, gm))


def _counted(counts, ms: MeasurementSet):
    n = np.asarray(counts.counts if isinstance(counts, CountData) else counts, dtype=float)
    if n.shape != (len(ms),):
        raise ValueError(f"expected {len(ms)} count entries, got {n.shape}")
    nz = n > 0
    return n[nz], ms.vectors[nz]


def _probs(rho, vectors) -> np.ndarray:
    return np.einsum("mj,jk,mk->m", vectors.conj(), rho, vectors).real


def log_likelihood(rho, ms: MeasurementSet, counts) -> float:
    """``sum_m N_m log Tr(Pi_m rho)``; outcomes with no counts contribute nothing."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (ms.d, ms.d):
        raise ValueError("dimension mismatch")
    n, v = _counted(counts, ms)
    p = np.maximum(_probs(rho, v), PROB_FLOOR)
    return float(np.sum(n * np.log(p)))


def likelihood_gradient(rho, ms: MeasurementSet, counts) -> np.ndarray:
    """Hermitian gradient ``sum_m (N_m / p_m) Pi_m`` of :func:`log_likelihood`."""
    n, v = _counted(counts, ms)
    p = np.maximum(_probs(np.asarray(rho, complex), v), PROB_FLOOR)
    w = n / p
    return (v.T * w) @ v.conj()


@dataclass
class ApgOptions:
    """Hyperparameters for :func:`max_likelihood_apg`."""

    max_iters: int = 5000
    tol: float = 1e-10
    initial_step: float | None = None
    backtrack: float = 0.5
    restart: bool = True
    min_step: float = 1e-18

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol <= 0 or not 0 < self.backtrack < 1:
            raise ValueError("tolerance must be positive and backtrack factor in (0, 1)")
        if self.initial_step is not None and self.initial_step <= 0:
            raise ValueError("initial step must be positive")


@dataclass
class ApgResult:
    rho: np.ndarray
    log_likelihood: float
    iterations: int
    restarts: int
    converged: bool
    reason: str
    history: list[float] = field(default_factory=list)

    def diagnostics(self) -> dict:
        return {
            "iterations": self.iterations,
            "log_likelihood": self.log_likelihood,
            "restarts": self.restarts,
            "converged": self.converged,
            "reason": self.reason,
        }


def default_ml_init(counts, ms: MeasurementSet) -> np.ndarray:
    """Projected linear-inversion estimate when T is complete, else the maximally mixed state."""
    n = np.asarray(getattr(counts, "counts", counts), dtype=float)
    if ms.rank == len(gell_mann_basis(ms.d)) and n.sum() > 0:
        return linear_inversion(n / n.sum(), ms)
    return np.eye(ms.d, dtype=complex) / ms.d


def max_likelihood_apg(counts, ms: MeasurementSet, opts: ApgOptions | None = None, init=None) -> ApgResult:
    """Maximum-likelihood state by accelerated projected gradient with adaptive restart.

    Works on the mean negative log-likelihood ``f = -L / N``. Each trial
    step from the extrapolated point is projected onto the density
    matrices and shrunk by ``opts.backtrack`` until the quadratic upper
    bound holds. If the accepted point would lower the likelihood the
    momentum is reset and the step retried from the current iterate, so
    the accepted likelihood sequence never decreases.
    """
    opts = ApgOptions() if opts is None else opts
    n, v = _counted(counts, ms)
    n_total = n.sum()
    if n_total <= 0:
        raise ValueError("no counts to fit")
    f_w = n / n_total
    d = ms.d

    def objective(rho):
        p = _probs(rho, v)
        if np.any(p <= 0):
            return math.inf
        return -float(np.sum(f_w * np.log(p)))

    def grad(rho):
        p = _probs(rho, v)
        return -((v.T * (f_w / p)) @ v.conj())

    if init is None:
        init = default_ml_init(counts, ms)
    x = np.array(init, dtype=complex)
    fx = objective(x)
    for mix in (0.01, 0.1, 0.5, 1.0):
        if math.isfinite(fx):
            break
        x = (1 - mix) * np.asarray(init, complex) + mix * np.eye(d) / d
        fx = objective(x)
    if not math.isfinite(fx):
        raise ConvergenceError("initial state assigns zero probability to observed outcomes")

    if opts.initial_step is not None:
        step = opts.initial_step
    else:
        step = 1.0 / max(np.linalg.norm(ms.total(), 2), 1e-12)
    y, fy, t = x, fx, 1.0
    history = [-fx * n_total]
    restarts = 0
    reason = "max_iters"
    converged = False
    it = 0
    while it < opts.max_iters:
        g = grad(y)
        while True:
            cand = project_to_density(y - step * g)
            fc = objective(cand)
            diff = cand - y
            bound = fy + np.vdot(g, diff).real + np.vdot(diff, diff).real / (2 * step)
            if math.isfinite(fc) and fc <= bound + 1e-15 * abs(fy):
                break
            step *= opts.backtrack
            if step < opts.min_step:
                break
        if step < opts.min_step:
            reason = "step_underflow"
            converged = True
            break
        if fc > fx:
            if y is x:
                # projected step from a feasible point cannot increase f
                reason = "stalled"
                converged = True
                break
            if opts.restart:
                restarts += 1
            y, fy, t = x, fx, 1.0
            continue
        it += 1
        x_prev, fx_prev = x, fx
        x, fx = cand, fc
        history.append(-fx * n_total)
        if not math.isfinite(fx):
            raise ConvergenceError("non-finite likelihood")
        if abs(fx_prev - fx) <= opts.tol * max(abs(fx), 1e-300):
            reason = "tolerance"
            converged = True
            break
        t_next = (1 + math.sqrt(1 + 4 * t * t)) / 2
        y = x + ((t - 1) / t_next) * (x - x_prev)
        t = t_next
        fy = objective(y)
        if not math.isfinite(fy):
            if opts.restart:
                restarts += 1
            y, fy, t = x, fx, 1.0
        # let the step recover after backtracking
        step /= math.sqrt(opts.backtrack)
    return ApgResult(
        rho=x,
        log_likelihood=-fx * n_total,
        iterations=it,
        restarts=restarts,
        converged=converged,
        reason=reason,
        history=history,
    )


def dominant_eigenvector(rho, degeneracy_tol: float = 1e-10) -> np.ndarray:
    """Unit eigenvector of the largest eigenvalue; largest component made real positive."""
    rho = np.asarray(rho, dtype=complex)
    w, v = np.linalg.eigh((rho + rho.conj().T) / 2)
    if w.size > 1 and w[-1] - w[-2] <= degeneracy_tol:
        raise DegenerateEigenvalueError(
            f"leading eigenvalue is degenerate ({w[-1]:.6g} vs {w[-2]:.6g})"
        )
    vec = v[:, -1]
    k = int(np.argmax(np.abs(vec)))
    vec = vec * (abs(vec[k]) / vec[k])
    return vec / np.linalg.norm(vec)
