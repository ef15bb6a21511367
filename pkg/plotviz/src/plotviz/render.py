"""Heatmap rendering of FieldGrid files; pure file -> image mapping."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .reader import Field, FieldGridError, read_field  # noqa: E402

NAN_COLOR = "0.75"  # neutral gray for boxes with no data
_PNG_METADATA = {"Software": "plotviz"}  # fixed so identical inputs hash equal


def _imshow(ax, plane, extents, cmap, vmin, vmax):
    cm = plt.get_cmap(cmap).copy()
    cm.set_bad(NAN_COLOR)
    return ax.imshow(
        np.ma.masked_invalid(plane), origin="lower", cmap=cm,
        vmin=vmin, vmax=vmax, interpolation="nearest", aspect="auto",
        extent=(extents[0][0], extents[0][1], extents[1][0], extents[1][1]))


def _limits(field: Field, clip):
    if clip is not None:
        return float(clip[0]), float(clip[1])
    finite = field.finite
    if finite.size == 0:
        return 0.0, 1.0
    lo, hi = float(finite.min()), float(finite.max())
    if lo == hi:
        hi = lo + 1.0
    return lo, hi


def render(in_path, out_path, cmap="viridis", clip=None, overlay=None,
           limits=None) -> None:
    """Render one field file to a raster image.

    ``overlay`` draws a second field (same grid) as contour lines on top;
    ``limits`` overrides the color scale (used for shared-scale batches).
    """
    field = read_field(in_path)
    over = None
    if overlay is not None:
        over = read_field(overlay)
        if over.counts != field.counts:
            raise FieldGridError(
                f"overlay grid {over.counts} does not match {field.counts}")
    vmin, vmax = limits if limits is not None else _limits(field, clip)

    if field.dim == 2:
        fig, ax = plt.subplots(figsize=(7.2, 4.2), dpi=150)
        im = _imshow(ax, field.values, field.extents, cmap, vmin, vmax)
        if over is not None:
            xs = np.linspace(*field.extents[0], field.counts[0])
            ys = np.linspace(*field.extents[1], field.counts[1])
            ax.contour(xs, ys, np.ma.masked_invalid(over.values), levels=7,
                       colors="w", linewidths=0.7)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        fig.colorbar(im, ax=ax, shrink=0.9)
    else:
        # 3D: a row of z-slice panels
        nz = field.counts[2]
        picks = np.unique(np.linspace(0, nz - 1, min(nz, 4)).astype(int))
        fig, axes = plt.subplots(1, len(picks),
                                 figsize=(3.4 * len(picks) + 1.2, 3.2), dpi=150)
        axes = np.atleast_1d(axes)
        z0, z1 = field.extents[2]
        for ax, iz in zip(axes, picks):
            im = _imshow(ax, field.values[iz], field.extents, cmap, vmin, vmax)
            zc = z0 + (iz + 0.5) * (z1 - z0) / nz
            ax.set_title(f"z = {zc:.3g}", fontsize=9)
        fig.colorbar(im, ax=list(axes), shrink=0.85)
    title = f"{field.tag}  t0={field.t0:g}  tau={field.tau:g}  seed={field.seed}"
    fig.suptitle(title, fontsize=10)
    fig.savefig(out_path, metadata=_PNG_METADATA)
    plt.close(fig)


def batch(directory, cmap="viridis", shared_scale=False):
    """Render every .fgrid under `directory` next to itself as .png.

    Returns (rendered paths, failures); bad files are skipped, not fatal.
    """
    from pathlib import Path

    root = Path(directory)
    rendered = []
    failures = []
    paths = sorted(root.glob("*.fgrid"))
    limits = None
    if shared_scale and paths:
        lo, hi = np.inf, -np.inf
        for path in paths:
            try:
                finite = read_field(path).finite
            except FieldGridError:
                continue
            if finite.size:
                lo = min(lo, float(finite.min()))
                hi = max(hi, float(finite.max()))
        if np.isfinite(lo) and np.isfinite(hi):
            limits = (lo, hi if hi > lo else lo + 1.0)
    for path in paths:
        out = path.with_suffix(".png")
        try:
            render(path, out, cmap=cmap, limits=limits)
            rendered.append(out)
        except FieldGridError as exc:
            failures.append((path, str(exc)))
    return rendered, failures
