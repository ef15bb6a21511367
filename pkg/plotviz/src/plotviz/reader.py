"""Standalone FieldGrid v1 parser (the renderer's only input format)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class FieldGridError(ValueError):
    pass


@dataclass
class Field:
    dim: int
    counts: tuple  # (nx, ny[, nz])
    kind: str  # "torus" | "box"
    extents: tuple  # ((lo, hi), ...) per axis
    t0: float
    tau: float
    seed: int
    tag: str
    values: np.ndarray  # shaped (nz, ny, nx) / (ny, nx)

    @property
    def finite(self) -> np.ndarray:
        return self.values[np.isfinite(self.values)]


def read_field(path) -> Field:
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise FieldGridError(f"cannot read {path}: {exc}")
    if len(lines) < 6 or lines[0].strip() != "FGRID 1":
        raise FieldGridError(f"{path}: not a FieldGrid v1 file")
    try:
        head = [int(v) for v in lines[1].split()]
        dim, counts = head[0], tuple(head[1:])
        if dim not in (2, 3) or len(counts) != dim:
            raise ValueError("inconsistent dimension header")
        dom = lines[2].split()
        if dom[0] == "torus":
            lengths = [float(v) for v in dom[1:]]
            if len(lengths) != dim:
                raise ValueError("torus lengths mismatch")
            extents = tuple((0.0, L) for L in lengths)
            kind = "torus"
        elif dom[0] == "box":
            vals = [float(v) for v in dom[1:]]
            if len(vals) != 2 * dim:
                raise ValueError("box bounds mismatch")
            extents = tuple((vals[2 * a], vals[2 * a + 1]) for a in range(dim))
            kind = "box"
        else:
            raise ValueError(f"unknown domain {dom[0]!r}")
        t0_s, tau_s, seed_s = lines[3].split()
        tag = lines[4].strip()
        body = [ln for ln in lines[5:] if ln.strip()]
        n = int(np.prod(counts))
        if len(body) != n:
            raise ValueError(f"expected {n} values, found {len(body)}")
        values = np.array([float(v) for v in body])
    except (ValueError, IndexError) as exc:
        raise FieldGridError(f"{path}: {exc}")
    shaped = values.reshape(tuple(reversed(counts)))
    return Field(dim=dim, counts=counts, kind=kind, extents=extents,
                 t0=float(t0_s), tau=float(tau_s), seed=int(seed_s),
                 tag=tag, values=shaped)
