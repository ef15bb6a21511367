"""Per-box diagnostics assembled into scalar fields.

The per-box divergence rate follows the discrete transfer-operator form
    R(B_i) = (1/|tau|) sum_j P_ij (log P_ij - log m)
with m the displacement-bin volume (the box volume under default binning).
Its value on the identity flow is -log(m)/|tau|; values *decrease* as the
image spreads (and can go negative once the image covers volume > 1), so for
ridge comparison against FTLE fields the expansion-oriented quantity is the
identity baseline minus the field (see ``expansion_rate``).
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from . import tangent
from .divergence import DivergenceKind, KL, phi_eval
from .flows import DynamicsSpec, IntegratorConfig, SharedNoise
from .ulam import GridPartition, RowDistribution, SamplingPlan, estimate_rows

log = logging.getLogger(__name__)

DIAGNOSTICS = ("ftdr", "ftle_max", "ftle_min", "ftle_stoch")


@dataclass(frozen=True)
class FieldGridMeta:
    """Geometry header of a scalar field (what FieldGrid v1 serializes)."""

    kind: str  # "torus" | "box"
    counts: tuple
    lengths: Optional[tuple] = None  # torus
    bounds: Optional[tuple] = None  # box: ((lo, hi), ...)

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def n_boxes(self) -> int:
        return int(np.prod(self.counts))

    @staticmethod
    def from_partition(part: GridPartition) -> "FieldGridMeta":
        if part.domain.kind == "torus2d":
            return FieldGridMeta("torus", tuple(int(c) for c in part.counts),
                                 lengths=tuple(part.domain.lengths))
        return FieldGridMeta("box", tuple(int(c) for c in part.counts),
                             bounds=tuple(part.domain.bounds))


@dataclass
class ScalarField:
    grid: FieldGridMeta
    values: np.ndarray  # flat, x fastest then y then z
    diagnostic: str
    t0: float
    tau: float
    seed: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.size != self.grid.n_boxes:
            raise ValueError("value count must equal box count")

    def __eq__(self, other):
        if not isinstance(other, ScalarField):
            return NotImplemented
        return (self.grid == other.grid
                and self.diagnostic == other.diagnostic
                and self.t0 == other.t0 and self.tau == other.tau
                and self.seed == other.seed
                and self.values.tobytes() == other.values.tobytes())

    def shaped(self) -> np.ndarray:
        return self.values.reshape(tuple(reversed(self.grid.counts)))


# ---------------------------------------------------------------------------
# Per-box divergence rates


def ftdr_box(row: RowDistribution, m: float, tau: float) -> float:
    """KL-form rate (1/|tau|) sum_j P_j (log P_j - log m); zero-probability
    bins drop out (0 log 0 := 0).  NaN when everything escaped."""
    if m <= 0.0:
        raise ValueError("m must be positive")
    if tau == 0.0:
        raise ValueError("tau must be nonzero")
    if row.outside_count == row.samples_total:
        return math.nan
    log_m = math.log(m)
    total = row.samples_total
    acc = 0.0
    for c in row.counts.values():
        p = c / total
        acc += p * (math.log(p) - log_m)
    return acc / abs(tau)


def ftdr_box_phi(kind: DivergenceKind, row: RowDistribution, m: float,
                 tau: float) -> float:
    """General-generator rate (1/|tau|) sum_j phi(P_j / m) m over visited bins,
    with the unnormalized per-cell Lebesgue reference of mass m.

    The KL kind delegates to ``ftdr_box``: sum (P/m) log(P/m) m is the same
    sum term by term, and delegation keeps the two bit-identical.
    """
    if kind.kind == "kl":
        return ftdr_box(row, m, tau)
    if m <= 0.0:
        raise ValueError("m must be positive")
    if tau == 0.0:
        raise ValueError("tau must be nonzero")
    if row.outside_count == row.samples_total:
        return math.nan
    total = row.samples_total
    acc = 0.0
    for c in row.counts.values():
        acc += phi_eval(kind, (c / total) / m) * m
    return acc / abs(tau)


def ftdr_identity_baseline(m: float, tau: float) -> float:
    """The rate of the identity flow under default (box-sized) binning."""
    return -math.log(m) / abs(tau)


def expansion_rate(field_obj: ScalarField) -> np.ndarray:
    """Identity baseline minus the FTDR values: ranks boxes by how much their
    displacement distribution spread, which is the orientation that matches
    FTLE ridges."""
    if field_obj.diagnostic.split(":")[0] != "ftdr":
        raise ValueError("expansion_rate applies to ftdr fields")
    baseline = field_obj.meta.get("identity_baseline")
    if baseline is None:
        raise ValueError("field metadata lacks identity_baseline")
    return baseline - field_obj.values


# ---------------------------------------------------------------------------
# Field assembly


def _chunks(indices, n_chunks):
    return [c for c in np.array_split(indices, n_chunks) if len(c)]


def _ftdr_values(spec, part, boxes, t0, tau, kind, plan, cfg, seed):
    rows = estimate_rows(spec, part, boxes, t0, tau, plan, cfg, seed)
    m_bin = float(np.prod(rows[0].bin_sizes)) if rows else part.box_volume
    vals = np.empty(len(rows))
    for i, row in enumerate(rows):
        vals[i] = ftdr_box_phi(kind, row, m_bin, tau)
    return vals


def _ftle_values(spec, part, boxes, t0, tau, variant, plan, cfg, seed):
    centers = part.center(boxes)
    L = plan.realizations if spec.is_stochastic else 1
    B = len(boxes)
    X0 = np.repeat(centers, L, axis=0)
    sn = None
    if spec.is_stochastic:
        sn = SharedNoise(seed, np.repeat(boxes, L), np.tile(np.arange(L), B),
                         None, spec.dim, backward=tau < 0)
    _, Y = tangent.derivative_flow_batch(spec, t0, tau, X0, cfg, shared_noise=sn)
    sv = tangent.singular_values(Y).reshape(B, L, -1)
    atau = abs(tau)
    if variant == "ftle_max":
        per = np.log(sv[:, :, 0]) / atau
        return per.mean(axis=1)
    if variant == "ftle_min":
        per = np.log(sv[:, :, -1]) / atau
        return per.mean(axis=1)
    # ftle_stoch: direction-resolved average growth
    from .noise import unit_directions
    dirs = unit_directions(seed, plan.directions, spec.dim)
    Y = Y.reshape(B, L, spec.dim, spec.dim)
    img = np.einsum("blij,kj->blki", Y, dirs)
    growth = np.log(np.linalg.norm(img, axis=-1)) / atau
    return growth.mean(axis=(1, 2))


def compute_field(spec: DynamicsSpec, partition: GridPartition, t0: float,
                  tau: float, diagnostic: str, plan: SamplingPlan,
                  cfg: IntegratorConfig, seed: int,
                  divergence_kind: DivergenceKind = KL, threads: int = 1,
                  slice_axis: Optional[int] = None,
                  slice_value: float = 0.0) -> ScalarField:
    """Forward (tau > 0) or backward (tau < 0) diagnostic field.

    On 3D partitions a slice axis selects the plane of boxes to evaluate; the
    result is the 2D field over the remaining axes, with displacement binning
    still done in full 3D.
    """
    if diagnostic not in DIAGNOSTICS:
        raise ValueError(f"unknown diagnostic {diagnostic!r}")
    if tau == 0.0:
        raise ValueError("tau must be nonzero")

    boxes = np.arange(partition.n_boxes)
    grid_meta = FieldGridMeta.from_partition(partition)
    slice_meta = {}
    if partition.dim == 3:
        axis = 1 if slice_axis is None else int(slice_axis)
        boxes = partition.slice_boxes(axis, slice_value)
        keep = [a for a in range(3) if a != axis]
        counts = tuple(int(partition.counts[a]) for a in keep)
        bounds = tuple(partition.domain.bounds[a] for a in keep)
        grid_meta = FieldGridMeta("box", counts, bounds=bounds)
        slice_meta = {"slice_axis": axis, "slice_value": float(slice_value),
                      "full_counts": tuple(int(c) for c in partition.counts)}
    elif slice_axis is not None:
        raise ValueError("slice selection applies to 3D partitions only")

    if diagnostic == "ftdr":
        def work(chunk):
            return _ftdr_values(spec, partition, chunk, t0, tau,
                                divergence_kind, plan, cfg, seed)
    else:
        def work(chunk):
            return _ftle_values(spec, partition, chunk, t0, tau, diagnostic,
                                plan, cfg, seed)

    values = np.full(len(boxes), np.nan)
    pos_of_box = {int(b): i for i, b in enumerate(boxes)}
    n_chunks = max(1, min(len(boxes),
                          threads * 4 if threads > 1 else
                          math.ceil(len(boxes) * (plan.lattice_edge() ** partition.dim)
                                    * plan.realizations / 300_000)))
    chunks = _chunks(boxes, n_chunks)

    def run_chunk(chunk):
        try:
            return chunk, work(chunk)
        except Exception:  # noqa: BLE001 - per-box fallback below
            vals = np.full(len(chunk), np.nan)
            for i, b in enumerate(chunk):
                try:
                    vals[i] = work(np.asarray([b]))[0]
                except Exception as inner:  # noqa: BLE001
                    log.warning("box %d failed: %s", int(b), inner)
            return chunk, vals

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_chunk, chunks))
    else:
        results = [run_chunk(c) for c in chunks]
    for chunk, vals in results:
        for b, v in zip(chunk, vals):
            values[pos_of_box[int(b)]] = v

    tag = diagnostic
    if diagnostic == "ftdr":
        suffix = divergence_kind.kind
        if divergence_kind.alpha is not None:
            suffix += f"{divergence_kind.alpha:g}"
        tag = f"ftdr:{suffix}"
    m_bin = partition.box_volume / plan.bin_refine**partition.dim
    meta = {
        "scheme": cfg.scheme, "dt": cfg.dt, "system": spec.name,
        "params": dict(spec.params),
        "samples_per_box": plan.samples_per_box,
        "lattice_points": plan.lattice_edge() ** partition.dim,
        "realizations": plan.realizations, "bin_refine": plan.bin_refine,
        "box_volume": partition.box_volume,
        "ftle_sample_point": "box_center",
        **slice_meta,
    }
    if diagnostic == "ftdr":
        meta["bin_volume"] = m_bin
        meta["identity_baseline"] = ftdr_identity_baseline(m_bin, tau)
        meta["reference_measure"] = "lebesgue_per_cell"
    if spec.is_stochastic and tau < 0:
        meta["backward_stochastic"] = ("qualitative diagnostic: backward "
                                       "paths use independent increments")
    return ScalarField(grid=grid_meta, values=values, diagnostic=tag,
                       t0=float(t0), tau=float(tau), seed=int(seed), meta=meta)


def rank_correlation(a: ScalarField, b: ScalarField) -> float:
    """Spearman rank correlation over boxes finite in both fields."""
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    mask = np.isfinite(a.values) & np.isfinite(b.values)
    if mask.sum() < 8:
        raise ValueError("fewer than 8 common boxes")
    return float(stats.spearmanr(a.values[mask], b.values[mask]).statistic)
