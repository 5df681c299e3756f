"""Plain-text columnar files.

Every file starts with ``# key: value`` header lines followed by a
``# columns: ...`` line and whitespace-separated rows. Floats are written in
shortest round-trip form, so reading a file back reproduces the numbers bit
for bit.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .limitset import LimitSetEstimate
from .measure import GridMeasure, MarginalMeasure

MEASURE_FORMAT = "hybridsim-measure 1"
LIMITSET_FORMAT = "hybridsim-limitset 1"


def config_hash(config: Mapping[str, Any]) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _fmt_box(box) -> str:
    return "; ".join(f"{_fmt(lo)} {_fmt(hi)}" for lo, hi in np.asarray(box))


def _parse_box(text: str) -> np.ndarray:
    return np.array([[float(v) for v in part.split()] for part in text.split(";")])


def write_table(path, columns: list[str], rows: Iterable[Iterable], meta: Mapping[str, Any] | None = None) -> Path:
    """Write header and rows atomically (the file appears complete or not at all)."""
    path = Path(path)
    lines = [f"# {k}: {v}" for k, v in (meta or {}).items()]
    lines.append("# columns: " + " ".join(columns))
    lines.extend(" ".join(_fmt(v) if not isinstance(v, str) else v for v in row) for row in rows)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    os.replace(tmp, path)
    return path


def read_table(path) -> tuple[dict[str, str], list[str], list[list[str]]]:
    meta: dict[str, str] = {}
    columns: list[str] = []
    rows: list[list[str]] = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(":")
            if key == "columns":
                columns = value.split()
            else:
                meta[key.strip()] = value.strip()
        elif line.strip():
            rows.append(line.split())
    return meta, columns, rows


def write_measure(path, mu: GridMeasure | MarginalMeasure, meta: Mapping[str, Any] | None = None) -> Path:
    """Write nonzero cells (flat C-order index) and the overflow row (``-1``)."""
    grid = isinstance(mu, GridMeasure)
    header = {
        "format": MEASURE_FORMAT,
        "kind": "grid" if grid else "marginal",
        **(meta or {}),
        "box": _fmt_box(mu.box),
        "bins": " ".join(str(b) for b in mu.bins),
        "h": _fmt(mu.h),
        "t0": _fmt(mu.t0),
        "states": mu.n_states if grid else 1,
    }
    sheets = mu.sheets if grid else mu.weights[None]
    flat = sheets.reshape(sheets.shape[0], -1)
    states, cells = np.nonzero(flat)
    rows = [(int(s), int(c), float(flat[s, c])) for s, c in zip(states, cells)]
    rows.append((-1, -1, mu.overflow))
    return write_table(path, ["state", "cell", "weight"], rows, header)


def read_measure(path) -> GridMeasure | MarginalMeasure:
    meta, _, rows = read_table(path)
    if meta.get("format") != MEASURE_FORMAT:
        raise ValueError(f"{path}: not a measure file")
    box = _parse_box(meta["box"])
    bins = tuple(int(b) for b in meta["bins"].split())
    n_states = int(meta["states"])
    sheets = np.zeros((n_states, int(np.prod(bins))))
    overflow = 0.0
    for s, c, w in rows:
        if int(s) < 0:
            overflow = float(w)
        else:
            sheets[int(s), int(c)] = float(w)
    sheets = sheets.reshape(n_states, *bins)
    h, t0 = float(meta["h"]), float(meta["t0"])
    if meta["kind"] == "marginal":
        return MarginalMeasure(box, bins, sheets[0], overflow, t0, h)
    return GridMeasure(box, bins, sheets, overflow, t0, h)


def write_limit_set(path, ls: LimitSetEstimate, meta: Mapping[str, Any] | None = None) -> Path:
    header = {
        "format": LIMITSET_FORMAT,
        **(meta or {}),
        "box": _fmt_box(ls.box),
        "bins": " ".join(str(b) for b in ls.bins),
        "revisit_threshold": ls.revisit_threshold,
    }
    centers = ls.centers()
    rows = [
        (int(c), int(ls.occupancy.epochs[c]), int(ls.occupancy.visits[c]), *centers[k])
        for k, c in enumerate(ls.cells)
    ]
    cols = ["cell", "epochs", "visits"] + [f"x{i + 1}" for i in range(ls.box.shape[0])]
    return write_table(path, cols, rows, header)


def read_limit_set_cells(path) -> tuple[dict[str, str], np.ndarray]:
    meta, _, rows = read_table(path)
    if meta.get("format") != LIMITSET_FORMAT:
        raise ValueError(f"{path}: not a limit-set file")
    return meta, np.array([int(r[0]) for r in rows], dtype=np.int64)
