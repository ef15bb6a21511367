"""FieldGrid v1: the line-oriented text format for scalar fields.

    FGRID 1
    <dim> <nx> <ny> [<nz>]
    torus <Lx> <Ly>            |  box <x0> <x1> <y0> <y1> [<z0> <z1>]
    <t0> <tau> <seed>
    <diagnostic tag>
    one value per line, row-major by (z, y, x) ascending (x fastest)

Values are written with Python's shortest-round-trip float formatting, so
parse(serialize(f)) reproduces every value bit for bit; NaN is the literal
``nan``.
"""

from __future__ import annotations

import math

import numpy as np

from .fields import FieldGridMeta, ScalarField


class FieldGridFormatError(ValueError):
    pass


def _fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    return repr(float(x))


def serialize_fieldgrid(field: ScalarField) -> str:
    g = field.grid
    lines = ["FGRID 1", " ".join(str(v) for v in (g.dim, *g.counts))]
    if g.kind == "torus":
        lines.append("torus " + " ".join(_fmt(v) for v in g.lengths))
    else:
        flat = [v for pair in g.bounds for v in pair]
        lines.append("box " + " ".join(_fmt(v) for v in flat))
    lines.append(f"{_fmt(field.t0)} {_fmt(field.tau)} {field.seed}")
    lines.append(field.diagnostic)
    lines.extend(_fmt(v) for v in field.values)
    return "\n".join(lines) + "\n"


def write_fieldgrid(field: ScalarField, path) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_fieldgrid(field))


def parse_fieldgrid(text: str) -> ScalarField:
    lines = text.splitlines()
    if len(lines) < 6:
        raise FieldGridFormatError("truncated FieldGrid file")
    if lines[0].strip() != "FGRID 1":
        raise FieldGridFormatError(f"bad magic line {lines[0]!r}")
    try:
        head = [int(v) for v in lines[1].split()]
        dim, counts = head[0], tuple(head[1:])
    except ValueError as exc:
        raise FieldGridFormatError(f"bad dimension line: {exc}") from exc
    if dim not in (2, 3) or len(counts) != dim:
        raise FieldGridFormatError(f"dimension line {lines[1]!r} inconsistent")
    dom = lines[2].split()
    if dom[0] == "torus":
        if len(dom) != 1 + dim:
            raise FieldGridFormatError("torus line needs one length per axis")
        grid = FieldGridMeta("torus", counts,
                             lengths=tuple(float(v) for v in dom[1:]))
    elif dom[0] == "box":
        if len(dom) != 1 + 2 * dim:
            raise FieldGridFormatError("box line needs lo/hi per axis")
        vals = [float(v) for v in dom[1:]]
        grid = FieldGridMeta("box", counts,
                             bounds=tuple((vals[2 * a], vals[2 * a + 1])
                                          for a in range(dim)))
    else:
        raise FieldGridFormatError(f"unknown domain kind {dom[0]!r}")
    try:
        t0_s, tau_s, seed_s = lines[3].split()
        t0, tau, seed = float(t0_s), float(tau_s), int(seed_s)
    except ValueError as exc:
        raise FieldGridFormatError(f"bad t0/tau/seed line: {exc}") from exc
    tag = lines[4].strip()
    if not tag:
        raise FieldGridFormatError("empty diagnostic tag")
    body = [ln for ln in lines[5:] if ln.strip()]
    n = int(np.prod(counts))
    if len(body) != n:
        raise FieldGridFormatError(f"expected {n} values, found {len(body)}")
    try:
        values = np.array([float(v) for v in body])
    except ValueError as exc:
        raise FieldGridFormatError(f"bad value line: {exc}") from exc
    return ScalarField(grid=grid, values=values, diagnostic=tag, t0=t0,
                       tau=tau, seed=seed)


def read_fieldgrid(path) -> ScalarField:
    with open(path) as fh:
        return parse_fieldgrid(fh.read())
