"""CSV and PGM serialization of nodal fields."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np


def field_to_csv(values: np.ndarray) -> str:
    buf = io.StringIO()
    for row in np.asarray(values, dtype=float):
        buf.write(",".join(format(v, ".17g") for v in row))
        buf.write("\n")
    return buf.getvalue()


def write_csv(path: str | Path, values: np.ndarray) -> None:
    Path(path).write_text(field_to_csv(values), newline="\n")


def read_csv(path: str | Path) -> np.ndarray:
    arr = np.loadtxt(path, delimiter=",", ndmin=2)
    if arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{path}: expected a square n x n field, got {arr.shape}")
    return arr


def write_pgm(path: str | Path, values: np.ndarray, mask: np.ndarray | None = None) -> dict:
    """Write an ASCII (P2) greymap, min-max normalized to 0..255.

    Returns the scale used so callers can record it.
    """
    v = np.asarray(values, dtype=float)
    sel = v if mask is None else v[mask]
    lo = float(sel.min()) if sel.size else 0.0
    hi = float(sel.max()) if sel.size else 0.0
    span = hi - lo
    scaled = np.zeros(v.shape, dtype=int) if span == 0 else np.rint((v - lo) / span * 255.0).astype(int)
    scaled = np.clip(scaled, 0, 255)
    if mask is not None:
        scaled = np.where(mask, scaled, 0)
    rows, cols = v.shape
    lines = ["P2", f"{cols} {rows}", "255"]
    # PGM rows run top to bottom; flip so +y is up
    lines += [" ".join(str(int(p)) for p in row) for row in scaled[::-1]]
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")
    return {"min": lo, "max": hi}


def write_segments_csv(path: str | Path, segments: np.ndarray) -> None:
    lines = ["x0,y0,x1,y1"]
    for (x0, y0), (x1, y1) in np.asarray(segments).reshape(-1, 2, 2):
        lines.append(",".join(format(v, ".17g") for v in (x0, y0, x1, y1)))
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")
