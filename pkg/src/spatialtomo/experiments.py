"""Batch experiments behind the command-line subcommands.

Each runner takes an :class:`ExperimentConfig`, writes its CSV/JSON/PGM
artefacts under ``out_dir`` (when given) and returns the summary rows.
All randomness derives from ``(config.seed, purpose, ...)`` so reruns are
byte-identical; per-state results are written as they finish and reused
on a rerun.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import serialize
from .analysis import bootstrap_mean_ci, fidelity, pure_fidelity, random_mixed_state, random_pure_state
from .calibration import BeamGeometry, counts_image, estimate_geometry
from .config import ExperimentConfig, parse_theta
from .errors import ConfigError, InformationallyIncompleteError, ObstructionTooSevereError, TomographyError
from .estimation import dominant_eigenvector, linear_inversion, max_likelihood_apg
from .forward import (
    CountData,
    add_read_noise,
    born_probabilities,
    intensity_image,
    read_pgm,
    sample_photocounts,
    seeded_rng,
    write_image_csv,
    write_pgm,
)
from .measurement import combine_channels, converted_povm, pixel_povm, rank_from_singular_values
from .modes import ModeBasis, PixelGrid, sample_basis
from .obstruction import ObstructionMask, apply_mask, cholesky_factor, g_operator, obstructed_tomography

log = logging.getLogger(__name__)

RANK_COLUMNS = ["d", "mode", "theta", "rank", "rank_normalized"]
STATE_COLUMNS = ["order", "d", "n_counts", "state_index", "fidelity", "estimator", "channels", "status"]
SUMMARY_COLUMNS = ["order", "d", "n_counts", "mean_fidelity", "ci_low", "ci_high", "n_ok", "n_failed"]
SWEEP_COLUMNS = ["order", "n_counts", "mean_fidelity", "ci_low", "ci_high"]
MASK_STATE_COLUMNS = ["mask_kind", "mask_param", "state_index", "fidelity", "reason"]
MASK_SUMMARY_COLUMNS = ["mask_kind", "mask_param", "mean_fidelity", "ci_low", "ci_high", "reason"]
APG_COLUMNS = ["order", "n_counts", "state_index", "iterations", "log_likelihood", "restarts", "converged", "reason"]

DEFAULT_MASKS = {"blade": [0.0, -0.5, -1.0, -1.5, -2.0], "iris": [1.5, 1.0, 0.5, 0.4, 0.3]}


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _prepare_dir(out_dir) -> Path | None:
    if out_dir is None:
        return None
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def build_measurement(sb, channels: str, theta: float | None, weights=(0.5, 0.5), drop_dark: bool = True):
    direct = pixel_povm(sb, drop_dark=drop_dark)
    if channels == "direct":
        return direct
    return combine_channels([direct, converted_povm(direct, theta)], weights)


# ---------------------------------------------------------------- rank scan


def rank_scan(grid: PixelGrid, dimensions, thetas, waist: float = 1.0) -> list[dict]:
    """Rank of T for the direct channel and for each converter angle, per dimension."""
    rows = []
    for d in dimensions:
        if d < 2:
            raise ValueError("dimensions must be >= 2")
        sb = sample_basis(ModeBasis.hg_fixed_order(d - 1, waist), grid)
        direct = pixel_povm(sb, drop_dark=True)
        full = d * d - 1
        rank = rank_from_singular_values(direct.singular_values)
        rows.append({"d": d, "mode": "direct", "theta": None, "rank": rank, "rank_normalized": rank / full})
        for value in thetas:
            theta = parse_theta(value, d)
            ms = combine_channels([direct, converted_povm(direct, theta)])
            rank = rank_from_singular_values(ms.singular_values)
            rows.append({"d": d, "mode": "combined", "theta": theta, "rank": rank, "rank_normalized": rank / full})
    return rows


def cmd_rank_scan(cfg: ExperimentConfig, out_dir=None) -> list[dict]:
    grid = cfg.pixel_grid()
    waist = float((cfg.basis or {}).get("waist", 1.0))
    rows = rank_scan(grid, cfg.dimensions, cfg.thetas, waist)
    out = _prepare_dir(out_dir)
    if out is not None:
        serialize.write_csv(out / "rank_scan.csv", "rank-scan", RANK_COLUMNS, rows)
    return rows


# ---------------------------------------------------------------- tomography


def make_states(cfg: ExperimentConfig, d: int) -> list[np.ndarray]:
    """Target states: density matrices, or kets for the pure-state source."""
    src = cfg.states["source"]
    if src == "explicit":
        rho = serialize.load_density(cfg.resolve(cfg.states["path"]))
        if rho.shape[0] != d:
            raise ValueError(f"explicit state has d={rho.shape[0]}, basis has d={d}")
        return [rho]
    count = int(cfg.states.get("count", 100 if src == "random-mixed" else 50))
    gen = random_mixed_state if src == "random-mixed" else random_pure_state
    return [gen(d, seeded_rng(cfg.seed, "state", d, i)) for i in range(count)]


def _as_rho(target) -> np.ndarray:
    if target.ndim == 1:
        return np.outer(target, target.conj())
    return target


def _score(target, rho_hat, estimator: str) -> float:
    if target.ndim == 1:
        if estimator == "ml":
            return abs(np.vdot(target, dominant_eigenvector(rho_hat))) ** 2
        return pure_fidelity(target, rho_hat)
    return fidelity(target, rho_hat)


def _simulated_data(rho, ms, n_counts, read_noise, rng):
    p = born_probabilities(rho, ms)
    if n_counts is None:
        if read_noise > 0:
            p = add_read_noise(p, read_noise * p.max(), rng)
        return p
    return sample_photocounts(p, n_counts, rng).astype(float)


def _estimate(data, ms, cfg: ExperimentConfig):
    """Estimated state and, for the ML estimator, its solver diagnostics."""
    if cfg.estimator == "linear":
        total = data.sum()
        if total <= 0:
            raise ValueError("no counts recorded")
        return linear_inversion(data / total, ms, allow_incomplete=cfg.force_incomplete), None
    res = max_likelihood_apg(data, ms, cfg.apg_options())
    return res.rho, res.diagnostics()


def tomography_batch(cfg: ExperimentConfig, out_dir=None) -> tuple[list[dict], list[dict]]:
    """Simulate, estimate and score every (order, photocount total, state).

    Returns ``(state_rows, summary_rows)``. ``cfg.counts`` of ``None``
    means exact probabilities (optionally with read noise).
    """
    out = _prepare_dir(out_dir)
    state_dir = None
    if out is not None:
        state_dir = out / "states"
        state_dir.mkdir(exist_ok=True)
    grid = cfg.pixel_grid()
    totals = [None] if cfg.counts is None else list(cfg.counts)
    boot = cfg.bootstrap
    state_rows, summary, solver_rows = [], [], []
    for order in cfg.order_list():
        basis = cfg.mode_basis(order)
        d = basis.d
        theta = parse_theta(cfg.theta, d)
        if cfg.channels == "both" and not basis.is_fixed_order_hg:
            raise ConfigError("channels: the converted channel needs a fixed-order hg basis")
        sb = sample_basis(basis, grid)
        ms = build_measurement(sb, cfg.channels, theta, cfg.weights)
        if cfg.channels == "direct" and not cfg.force_incomplete and ms.rank < d * d - 1:
            raise InformationallyIncompleteError(ms.rank, d * d - 1)
        # build cached factorisations once before worker threads share them
        _ = ms.T, ms.singular_values
        targets = make_states(cfg, d)
        for n_counts in totals:
            tag = "exact" if n_counts is None else str(n_counts)

            def run(i, n_counts=n_counts, tag=tag):
                path = None if state_dir is None else state_dir / f"o{order}_n{tag}_s{i:04d}.json"
                if path is not None and path.exists():
                    with open(path) as fh:
                        doc = json.load(fh)
                    return doc.get("fidelity"), doc.get("status", "ok"), doc.get("solver")
                rng = seeded_rng(cfg.seed, "counts", d, tag, i)
                target = targets[i]
                diag = None
                try:
                    data = _simulated_data(_as_rho(target), ms, n_counts, cfg.read_noise, rng)
                    rho_hat, diag = _estimate(data, ms, cfg)
                    fid, status = float(_score(target, rho_hat, cfg.estimator)), "ok"
                except (TomographyError, ValueError, np.linalg.LinAlgError) as exc:
                    rho_hat, fid, status = None, None, f"error: {exc}"
                if path is not None:
                    extra = {"fidelity": fid, "status": status, "order": order, "state_index": i, "solver": diag}
                    if rho_hat is None:
                        with open(path, "w") as fh:
                            json.dump(extra, fh, sort_keys=True)
                    else:
                        serialize.save_density(path, rho_hat, **extra)
                return fid, status, diag

            results = _map(run, range(len(targets)), cfg.workers)
            fids = []
            for i, (fid, status, diag) in enumerate(results):
                if diag is not None:
                    solver_rows.append({"order": order, "n_counts": n_counts, "state_index": i, **diag})
                state_rows.append(
                    {
                        "order": order,
                        "d": d,
                        "n_counts": n_counts,
                        "state_index": i,
                        "fidelity": fid,
                        "estimator": cfg.estimator,
                        "channels": cfg.channels,
                        "status": status,
                    }
                )
                if fid is not None:
                    fids.append(fid)
            row = {"order": order, "d": d, "n_counts": n_counts, "n_ok": len(fids), "n_failed": len(results) - len(fids)}
            if fids:
                rep = bootstrap_mean_ci(
                    fids, int(boot.get("resamples", 10_000)), float(boot.get("level", 0.95)),
                    seed=cfg.seed,
                )
                row.update(mean_fidelity=rep.estimate, ci_low=rep.lower, ci_high=rep.upper)
            summary.append(row)
    if out is not None:
        serialize.write_csv(out / "states.csv", "tomography-states", STATE_COLUMNS, state_rows)
        serialize.write_csv(out / "summary.csv", "tomography-summary", SUMMARY_COLUMNS, summary)
        if cfg.estimator == "ml":
            serialize.write_csv(out / "apg_diagnostics.csv", "apg-diagnostics", APG_COLUMNS, solver_rows)
    return state_rows, summary


def cmd_tomography(cfg: ExperimentConfig, out_dir=None) -> list[dict]:
    return tomography_batch(cfg, out_dir)[1]


def cmd_photocount_sweep(cfg: ExperimentConfig, out_dir=None) -> list[dict]:
    """Mean fidelity against photocount total for pure states and the ML estimator."""
    if cfg.states["source"] != "random-pure" or cfg.estimator != "ml":
        log.warning("photocount sweep expects pure states and the ML estimator")
    if cfg.counts is None:
        cfg.counts = [128, 256, 512, 1024, 2048]
    _, summary = tomography_batch(cfg, out_dir)
    rows = [{k: r.get(k) for k in SWEEP_COLUMNS} for r in summary]
    if out_dir is not None:
        serialize.write_csv(Path(out_dir) / "photocount_sweep.csv", "photocount-sweep", SWEEP_COLUMNS, rows)
    return rows


# ---------------------------------------------------------------- obstruction


def incident_counts(p_kept, n_incident: int, rng) -> np.ndarray:
    """Counts on the kept pixels when ``n_incident`` photons arrive and blocked ones are lost."""
    lost = max(0.0, 1.0 - float(np.sum(p_kept)))
    return sample_photocounts(np.append(p_kept, lost), n_incident, rng)[:-1]


def obstruction_trial(rho, restricted, n_incident: int, rng, floor: float = 1e-6) -> float:
    """Fidelity of one obstructed reconstruction (linear inversion on the restored POVM)."""
    p = born_probabilities(rho, restricted)
    data = p if n_incident == 0 else incident_counts(p, n_incident, rng).astype(float)
    est = obstructed_tomography(data, restricted, floor=floor)
    return fidelity(rho, est.rho)


def cmd_obstruction_sweep(cfg: ExperimentConfig, out_dir=None) -> list[dict]:
    """Mean fidelity per blade position / iris radius, with obstruction correction."""
    out = _prepare_dir(out_dir)
    grid = cfg.pixel_grid()
    basis = cfg.mode_basis() if cfg.basis else ModeBasis.lg_list([(1, 0), (0, 2)])
    sb = sample_basis(basis, grid)
    d = basis.d
    if basis.family == "hg" and cfg.channels == "both":
        ms = build_measurement(sb, "both", parse_theta(cfg.theta, d), cfg.weights)
    else:
        ms = pixel_povm(sb, drop_dark=True)
    masks = cfg.mask_list() or [
        {"kind": kind, "param": p} for kind, params in DEFAULT_MASKS.items() for p in params
    ]
    targets = [_as_rho(t) for t in make_states(cfg, d)]
    boot = cfg.bootstrap
    state_rows, summary = [], []
    if out is not None:
        (out / "images").mkdir(exist_ok=True)
    for k, entry in enumerate(masks):
        kind, param = entry["kind"], entry["param"]
        # custom stencils have no parameter; key their streams by position instead
        key = repr(param) if param is not None else f"#{k}"
        row = {"mask_kind": kind, "mask_param": param, "reason": None}
        try:
            if kind == "custom":
                mask = ObstructionMask.custom(grid, read_pgm(entry["path"]) > 0)
            else:
                mask = ObstructionMask(kind, grid, param, basis.waist, basis.center)
            restricted = apply_mask(ms, mask)
            cholesky_factor(g_operator(restricted), cfg.g_floor)
        except (ObstructionTooSevereError, ValueError) as exc:
            row["reason"] = str(exc)
            summary.append(row)
            state_rows.append({"mask_kind": kind, "mask_param": param, "reason": str(exc)})
            continue

        def run(i, key=key, restricted=restricted):
            rng = seeded_rng(cfg.seed, "mask-counts", kind, key, i)
            try:
                return obstruction_trial(targets[i], restricted, cfg.mask_counts, rng, cfg.g_floor), None
            except (TomographyError, ValueError, np.linalg.LinAlgError) as exc:
                return None, str(exc)

        results = _map(run, range(len(targets)), cfg.workers)
        fids = []
        for i, (fid, reason) in enumerate(results):
            state_rows.append({"mask_kind": kind, "mask_param": param, "state_index": i, "fidelity": fid, "reason": reason})
            if fid is not None:
                fids.append(fid)
        if fids:
            rep = bootstrap_mean_ci(fids, int(boot.get("resamples", 10_000)), float(boot.get("level", 0.95)), cfg.seed)
            row.update(mean_fidelity=rep.estimate, ci_low=rep.lower, ci_high=rep.upper)
        if len(fids) < len(results):
            row["reason"] = f"{len(results) - len(fids)} state(s) failed"
        summary.append(row)
        if out is not None and targets:
            img = intensity_image(targets[0], sb) * mask.keep()
            name = f"custom_{k}" if param is None else f"{kind}_{param:+.2f}"
            write_pgm(out / "images" / f"{name}.pgm", img)
    if out is not None:
        serialize.write_csv(out / "obstruction_states.csv", "obstruction-states", MASK_STATE_COLUMNS, state_rows)
        serialize.write_csv(out / "obstruction_sweep.csv", "obstruction-sweep", MASK_SUMMARY_COLUMNS, summary)
    return summary


# ---------------------------------------------------------------- calibration / simulation


def cmd_calibrate(counts_path, grid: PixelGrid, order: int) -> BeamGeometry:
    """Centre and waist from a counts CSV (direct channel only)."""
    data = CountData.from_csv(counts_path)
    direct = np.array([c == "direct" for c in data.channels])
    if not np.any(direct):
        raise ValueError(f"{counts_path}: no direct-channel rows")
    img = counts_image(data.pixels[direct], data.counts[direct], grid)
    return estimate_geometry(img, grid, order)


def cmd_simulate(cfg: ExperimentConfig, out_dir) -> dict:
    """Forward-only run: images and (optionally) photocounts for the first target state."""
    out = _prepare_dir(out_dir)
    grid = cfg.pixel_grid()
    order = cfg.order_list()[0]
    basis = cfg.mode_basis(order)
    d = basis.d
    theta = parse_theta(cfg.theta, d) if basis.is_fixed_order_hg else None
    sb = sample_basis(basis, grid)
    rho = _as_rho(make_states(cfg, d)[0])
    serialize.save_density(out / "state.json", rho)
    direct = pixel_povm(sb)
    channels = [("direct", direct)]
    if cfg.channels == "both" and theta is not None:
        channels.append(("converted", converted_povm(direct, theta)))
    written = {}
    for name, ms in channels:
        img = (born_probabilities(rho, ms) / grid.pixel_area).reshape(grid.shape)
        write_pgm(out / f"{name}.pgm", img)
        write_image_csv(out / f"{name}.csv", img)
        written[name] = img
    if cfg.counts:
        ms = channels[0][1] if len(channels) == 1 else combine_channels([c[1] for c in channels], cfg.weights)
        p = born_probabilities(rho, ms)
        n = cfg.counts[0]
        counts = sample_photocounts(p, n, seeded_rng(cfg.seed, "simulate", n))
        CountData(counts, ms.pixels.copy(), tuple(ms.channel_labels())).to_csv(out / "counts.csv")
    return written


def summary_fidelity(rows, **match) -> float:
    for r in rows:
        if all(r.get(k) == v for k, v in match.items()):
            return r.get("mean_fidelity", math.nan)
    raise KeyError(match)
