"""Density-matrix JSON and schema-tagged CSV output."""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


def density_to_json(rho) -> dict:
    rho = np.asarray(rho, dtype=complex)
    return {"d": rho.shape[0], "re": rho.real.tolist(), "im": rho.imag.tolist()}


def density_from_json(doc: dict) -> np.ndarray:
    try:
        d = int(doc["d"])
        re = np.array(doc["re"], dtype=float)
        im = np.array(doc.get("im", np.zeros((d, d))), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed density matrix document: {exc}") from exc
    if re.shape != (d, d) or im.shape != (d, d):
        raise ValueError(f"density matrix parts {re.shape}/{im.shape} do not match d={d}")
    return re + 1j * im


def load_density(path) -> np.ndarray:
    with open(path) as fh:
        return density_from_json(json.load(fh))


def save_density(path, rho, **extra) -> None:
    doc = density_to_json(rho)
    doc.update(extra)
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
    os.replace(tmp, path)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, name: str, columns: list[str], rows: list[dict]) -> None:
    """CSV with a ``# spatialtomo <name> schema v<N>`` comment line, then a fixed header."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# spatialtomo {name} schema v{SCHEMA_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))
