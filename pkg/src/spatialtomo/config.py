"""JSON experiment configuration.

Every key is optional; unknown keys are rejected so typos surface early.
Example::

    {
      "preset": "desk",
      "grid": {"n": 128, "extent": 12.0},
      "basis": {"family": "hg", "order": 3, "waist": 1.0, "center": [0, 0]},
      "orders": [1, 2, 3, 4, 5],
      "theta": "pi/d",
      "channels": "both",
      "estimator": "linear",
      "states": {"source": "random-mixed", "count": 100},
      "counts": null,
      "masks": [{"kind": "blade", "param": -1.0}, {"kind": "custom", "path": "mask.pgm"}],
      "seed": 0
    }
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .estimation import ApgOptions
from .modes import ModeBasis, PixelGrid

PRESETS = {"desk": 128, "paper": 512}

_THETA_RE = re.compile(r"^\s*(?:(\d+(?:\.\d*)?)\s*\*?\s*)?pi\s*(?:/\s*(d|\d+(?:\.\d*)?))?\s*$")


def parse_theta(value, d: int | None = None) -> float:
    """Converter angle from a number or an expression like ``"pi/6"`` or ``"pi/d"``."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        theta = float(value)
    elif isinstance(value, str):
        m = _THETA_RE.match(value)
        if not m:
            raise ConfigError(f"theta: cannot parse {value!r}")
        coef = float(m.group(1)) if m.group(1) else 1.0
        den = m.group(2)
        if den == "d":
            if d is None:
                raise ConfigError("theta: 'pi/d' needs a dimension")
            den = d
        theta = coef * math.pi / float(den or 1)
    else:
        raise ConfigError(f"theta: unsupported value {value!r}")
    if not -math.pi < theta <= math.pi:
        raise ConfigError(f"theta: {theta} outside (-pi, pi]")
    return theta


@dataclass
class ExperimentConfig:
    preset: str = "desk"
    grid: dict | None = None
    basis: dict | None = None
    orders: list[int] | None = None
    dimensions: list[int] = field(default_factory=lambda: list(range(2, 11)))
    theta: float | str = "pi/d"
    thetas: list = field(default_factory=lambda: ["pi/d", "pi/2"])
    channels: str = "both"
    weights: list[float] = field(default_factory=lambda: [0.5, 0.5])
    force_incomplete: bool = False
    estimator: str = "linear"
    apg: dict = field(default_factory=dict)
    states: dict = field(default_factory=lambda: {"source": "random-mixed", "count": 100})
    counts: list[int] | None = None
    read_noise: float = 0.0
    masks: dict | list = field(default_factory=dict)
    mask_counts: int = 1_000_000
    g_floor: float = 1e-6
    bootstrap: dict = field(default_factory=lambda: {"resamples": 10_000, "level": 0.95})
    seed: int = 0
    workers: int = 1
    output: str = "out"
    base_dir: str = "."

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"preset: expected one of {sorted(PRESETS)}, got {self.preset!r}")
        if self.channels not in ("both", "direct"):
            raise ConfigError(f"channels: expected 'both' or 'direct', got {self.channels!r}")
        if self.estimator not in ("linear", "ml"):
            raise ConfigError(f"estimator: expected 'linear' or 'ml', got {self.estimator!r}")
        if self.counts is not None:
            if any((not isinstance(c, int)) or c < 0 for c in self.counts):
                raise ConfigError("counts: totals must be non-negative integers")
        if self.mask_counts < 0:
            raise ConfigError("mask_counts: must be non-negative")
        if self.workers < 1:
            raise ConfigError("workers: must be >= 1")
        if len(self.weights) != 2 or abs(sum(self.weights) - 1) > 1e-12 or min(self.weights) < 0:
            raise ConfigError("weights: need two non-negative values summing to 1")
        src = self.states.get("source")
        if src not in ("random-mixed", "random-pure", "explicit"):
            raise ConfigError(f"states.source: unknown source {src!r}")
        if src == "explicit":
            path = self.resolve(self.states.get("path", ""))
            if not path.is_file():
                raise ConfigError(f"states.path: file {path} does not exist")
        elif int(self.states.get("count", 0)) < 0:
            raise ConfigError("states.count: must be non-negative")
        self.mask_list()
        try:
            self.apg_options()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"apg: {exc}") from exc
        if self.theta is not None:
            parse_theta(self.theta, 2)

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> ExperimentConfig:
        known = {f.name for f in fields(cls)} - {"base_dir"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        return cls(**data, base_dir=str(base_dir))

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        try:
            return cls.from_dict(data, base_dir=path.parent)
        except TypeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def pixel_grid(self) -> PixelGrid:
        opts = self.grid or {}
        try:
            if "nx" in opts:
                return PixelGrid(
                    int(opts["nx"]),
                    int(opts["ny"]),
                    float(opts.get("extent_x", 12.0)),
                    float(opts.get("extent_y", 12.0)),
                    tuple(opts.get("origin", (0.0, 0.0))),
                )
            n = int(opts.get("n", PRESETS[self.preset]))
            return PixelGrid.square(n, float(opts.get("extent", 12.0)), tuple(opts.get("origin", (0.0, 0.0))))
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"grid: {exc}") from exc

    def mode_basis(self, order: int | None = None) -> ModeBasis:
        opts = dict(self.basis or {})
        family = opts.get("family", "hg")
        waist = float(opts.get("waist", 1.0))
        center = tuple(opts.get("center", (0.0, 0.0)))
        try:
            if family == "hg":
                n = order if order is not None else opts.get("order")
                if n is None:
                    raise ConfigError("basis.order: required for the hg family")
                return ModeBasis.hg_fixed_order(int(n), waist, center)
            if family == "lg":
                return ModeBasis.lg_list(opts.get("modes", [[1, 0], [0, 2]]), waist, center)
        except ValueError as exc:
            raise ConfigError(f"basis: {exc}") from exc
        raise ConfigError(f"basis.family: unknown family {family!r}")

    def order_list(self) -> list[int]:
        if self.orders is not None:
            return [int(o) for o in self.orders]
        if self.basis and "order" in self.basis:
            return [int(self.basis["order"])]
        return [1, 2, 3, 4, 5]

    def mask_list(self) -> list[dict]:
        """Masks as ``{"kind", "param"}`` entries (``"path"`` for custom PGM stencils).

        Accepts either that list form or the shorthand ``{"blade": [...], "iris": [...]}``.
        """
        if isinstance(self.masks, dict):
            entries = []
            for kind, params in self.masks.items():
                if kind not in ("blade", "iris"):
                    raise ConfigError(f"masks: unknown mask kind {kind!r}")
                entries.extend({"kind": kind, "param": float(p)} for p in params)
            return entries
        if not isinstance(self.masks, list):
            raise ConfigError("masks: expected an object or a list")
        entries = []
        for e in self.masks:
            kind = e.get("kind") if isinstance(e, dict) else None
            if kind in ("blade", "iris"):
                if not isinstance(e.get("param"), (int, float)):
                    raise ConfigError(f"masks: {kind} entry needs a numeric param")
                entries.append({"kind": kind, "param": float(e["param"])})
            elif kind == "custom":
                path = self.resolve(e.get("path", ""))
                if not path.is_file():
                    raise ConfigError(f"masks: custom stencil {path} does not exist")
                entries.append({"kind": "custom", "param": None, "path": str(path)})
            else:
                raise ConfigError(f"masks: unknown mask entry {e!r}")
        return entries

    def apg_options(self) -> ApgOptions:
        return ApgOptions(**self.apg)
