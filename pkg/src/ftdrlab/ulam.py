"""Monte Carlo estimation of centred transfer-operator rows on a box grid.

Each row is the empirical distribution of displacements phi(sample) -
phi(center) over a uniform in-box sample lattice and L shared-noise
realizations, binned on a displacement lattice of box-sized cells centred at
zero (minimal image on the torus).  Counts are integers, so rows are exactly
stochastic and bit-reproducible across thread counts.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .flows import Domain, DynamicsSpec, IntegratorConfig, SharedNoise, advance_batch

log = logging.getLogger(__name__)

FAR_CELLS = 32  # displacements beyond this many box-sized cells fold into outside


@dataclass(frozen=True)
class GridPartition:
    """Equal-volume box partition of a torus or of a bounding box.

    On the torus the cells tile the domain exactly; a box region carries one
    absorbing "outside" bin for trajectories that leave it.
    """

    domain: Domain  # torus2d, or the box region being partitioned
    counts: tuple  # (nx, ny[, nz])

    def __post_init__(self):
        if self.domain.kind == "unbounded":
            raise ValueError("partition needs a torus or box region")
        if len(self.counts) != self.domain.dim:
            raise ValueError("counts must match the domain dimension")
        if any(c < 1 for c in self.counts):
            raise ValueError("counts must be positive")

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def n_boxes(self) -> int:
        return int(np.prod(self.counts))

    @property
    def lows(self) -> np.ndarray:
        if self.domain.kind == "torus2d":
            return np.zeros(2)
        return np.array([b[0] for b in self.domain.bounds])

    @property
    def extents(self) -> np.ndarray:
        if self.domain.kind == "torus2d":
            return np.asarray(self.domain.lengths, dtype=float)
        return np.array([b[1] - b[0] for b in self.domain.bounds])

    @property
    def cell_sizes(self) -> np.ndarray:
        return self.extents / np.asarray(self.counts, dtype=float)

    @property
    def box_volume(self) -> float:
        return float(np.prod(self.cell_sizes))

    def index_to_multi(self, i) -> np.ndarray:
        """Flat index -> (ix, iy[, iz]); x varies fastest."""
        i = np.asarray(i)
        out = []
        for c in self.counts:
            out.append(i % c)
            i = i // c
        return np.stack(out, axis=-1)

    def multi_to_index(self, multi) -> np.ndarray:
        multi = np.asarray(multi)
        i = np.zeros(multi.shape[:-1], dtype=np.int64)
        stride = 1
        for a, c in enumerate(self.counts):
            i = i + multi[..., a] * stride
            stride *= c
        return i

    def center(self, i) -> np.ndarray:
        multi = self.index_to_multi(i)
        return self.lows + (multi + 0.5) * self.cell_sizes

    def all_centers(self) -> np.ndarray:
        return self.center(np.arange(self.n_boxes))

    def region_contains(self, X) -> np.ndarray:
        if self.domain.kind == "torus2d":
            return np.ones(np.asarray(X).shape[:-1], dtype=bool)
        return self.domain.contains(X)

    def slice_boxes(self, axis: int, value: float) -> np.ndarray:
        """Flat indices of the boxes whose cell along `axis` contains `value`."""
        h = self.cell_sizes[axis]
        k = int(np.clip(np.floor((value - self.lows[axis]) / h),
                        0, self.counts[axis] - 1))
        multi = self.index_to_multi(np.arange(self.n_boxes))
        return np.flatnonzero(multi[:, axis] == k)


@dataclass(frozen=True)
class SamplingPlan:
    """How rows are sampled: a (2N+1)^d in-box lattice plus realizations."""

    samples_per_box: int  # the nominal 2N count; the lattice has 2N+1 per axis
    realizations: int = 1
    bin_refine: int = 1  # displacement bins are cell_size / bin_refine wide
    independent_noise: bool = False  # debug mode breaking the shared-path pairing
    directions: int = 8  # tangent directions for direction-averaged FTLE fields

    def __post_init__(self):
        if self.samples_per_box < 4:
            raise ValueError("samples_per_box must be >= 4")
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        if self.bin_refine < 1:
            raise ValueError("bin_refine must be >= 1")
        if self.directions < 1:
            raise ValueError("directions must be >= 1")

    @property
    def half_width(self) -> int:
        return self.samples_per_box // 2

    def lattice_edge(self) -> int:
        return 2 * self.half_width + 1


@dataclass(frozen=True)
class RowDistribution:
    """One estimated operator row: displacement-bin counts over total samples."""

    source_box: int
    counts: dict  # bin multi-index tuple -> integer count
    outside_count: int
    samples_total: int
    bin_sizes: tuple  # physical widths of the displacement bins
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if sum(self.counts.values()) + self.outside_count != self.samples_total:
            raise ValueError("row counts do not sum to samples_total")

    @property
    def bins(self) -> dict:
        return {b: c / self.samples_total for b, c in self.counts.items()}

    @property
    def outside_mass(self) -> float:
        return self.outside_count / self.samples_total

    def probability_sum(self) -> float:
        return sum(self.bins.values()) + self.outside_mass

    def entropy(self) -> float:
        """Shannon entropy of the binned displacement distribution (nats),
        outside mass excluded."""
        tot = self.samples_total
        return -sum((c / tot) * math.log(c / tot) for c in self.counts.values())


def _sample_offsets(partition: GridPartition, plan: SamplingPlan) -> np.ndarray:
    """The in-box lattice of offsets from the box center, center included."""
    N = plan.half_width
    edge = plan.lattice_edge()
    axes = [np.arange(-N, N + 1) * (h / edge) for h in partition.cell_sizes]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack(grid, axis=-1).reshape(-1, partition.dim)


def estimate_rows(spec: DynamicsSpec, partition: GridPartition, box_indices,
                  t0: float, tau: float, plan: SamplingPlan,
                  cfg: IntegratorConfig, master_seed: int):
    """Rows for a batch of boxes; the batched work is bit-identical to calling
    estimate_row box by box (noise is keyed, not sequential)."""
    box_indices = np.atleast_1d(np.asarray(box_indices, dtype=np.int64))
    if spec.dim != partition.dim:
        raise ValueError("partition dimension does not match the system")
    if not spec.is_stochastic and plan.realizations != 1:
        raise ValueError("deterministic systems require realizations = 1")

    offsets = _sample_offsets(partition, plan)
    S = offsets.shape[0]
    center_slot = S // 2
    L = plan.realizations
    B = len(box_indices)
    d = partition.dim

    centers = partition.center(box_indices)  # (B, d)
    X0 = (centers[:, None, None, :] + offsets[None, None, :, :])  # (B, 1, S, d)
    X0 = np.broadcast_to(X0, (B, L, S, d)).reshape(-1, d)

    sn = None
    if spec.is_stochastic:
        box_rep = np.repeat(box_indices, L)
        real_rep = np.tile(np.arange(L), B)
        if plan.independent_noise:
            box_pts = np.repeat(box_rep, S)
            real_pts = np.repeat(real_rep, S)
            sample_pts = np.tile(np.arange(S), B * L)
            sn = SharedNoise(master_seed, box_pts, real_pts, None, d,
                             sample=sample_pts, backward=tau < 0)
        else:
            group_map = np.repeat(np.arange(B * L), S)
            sn = SharedNoise(master_seed, box_rep, real_rep, group_map, d,
                             backward=tau < 0)

    X = advance_batch(spec, t0, tau, X0, cfg, shared_noise=sn, check_finite=False)
    X = X.reshape(B, L, S, d)
    disp = X - X[:, :, center_slot:center_slot + 1, :]
    disp = spec.domain.minimal_image(disp)

    bad = ~np.isfinite(disp).all(axis=-1)  # (B, L, S)
    n_bad = int(bad.sum())
    if n_bad:
        log.warning("%d samples hit non-finite states; counted as outside", n_bad)
        disp = np.where(bad[..., None], 0.0, disp)

    delta = partition.cell_sizes / plan.bin_refine
    far = FAR_CELLS * plan.bin_refine
    j = np.floor(disp / delta + 0.5).astype(np.int64)  # (B, L, S, d)
    outside = bad | (np.abs(j) > far).any(axis=-1)
    if partition.domain.kind == "box":
        outside |= ~partition.region_contains(X)

    # encode (box, bin) pairs and count
    width = 2 * far + 1
    code = np.zeros((B, L, S), dtype=np.int64)
    stride = 1
    for a in range(d):
        code += (j[..., a] + far) * stride
        stride *= width
    box_slot = np.broadcast_to(np.arange(B)[:, None, None], code.shape)
    flat_code = np.where(outside, -1, code) + box_slot * np.int64(stride)
    keep = ~outside
    uniq, cnt = np.unique(flat_code[keep], return_counts=True)

    rows = []
    total = L * S
    meta = {"lattice_edge": plan.lattice_edge(), "lattice_points": S,
            "realizations": L, "bin_refine": plan.bin_refine,
            "independent_noise": plan.independent_noise,
            "shared_noise": spec.is_stochastic and not plan.independent_noise}
    out_per_box = outside.reshape(B, -1).sum(axis=1)
    u_box = uniq // stride
    u_code = uniq - u_box * stride
    for bpos, bindex in enumerate(box_indices):
        sel = u_box == bpos
        counts = {}
        for c, n in zip(u_code[sel], cnt[sel]):
            multi = []
            cc = int(c)
            for a in range(d):
                multi.append(cc % width - far)
                cc //= width
            counts[tuple(multi)] = int(n)
        rows.append(RowDistribution(
            source_box=int(bindex), counts=counts,
            outside_count=int(out_per_box[bpos]), samples_total=total,
            bin_sizes=tuple(delta), meta=dict(meta)))
    return rows


def estimate_row(spec: DynamicsSpec, partition: GridPartition, box_i: int,
                 t0: float, tau: float, samples_per_box: int, realizations: int,
                 cfg: IntegratorConfig, master_seed: int,
                 bin_refine: int = 1, independent_noise: bool = False) -> RowDistribution:
    """One Ulam row: uniform in-box lattice advanced with shared noise,
    displacements binned about the centre image."""
    plan = SamplingPlan(samples_per_box=samples_per_box, realizations=realizations,
                        bin_refine=bin_refine, independent_noise=independent_noise)
    return estimate_rows(spec, partition, [box_i], t0, tau, plan, cfg, master_seed)[0]


@dataclass
class OperatorEstimate:
    rows: list
    errors: list  # (box index, message)


def estimate_operator(spec: DynamicsSpec, partition: GridPartition, t0: float,
                      tau: float, plan: SamplingPlan, cfg: IntegratorConfig,
                      master_seed: int, boxes=None,
                      chunk_points: int = 300_000) -> OperatorEstimate:
    """All rows (or a subset of boxes); per-row failures are collected and the
    run continues."""
    if boxes is None:
        boxes = np.arange(partition.n_boxes)
    boxes = np.asarray(boxes, dtype=np.int64)
    per_box = plan.lattice_edge() ** partition.dim * plan.realizations
    step = max(1, chunk_points // per_box)
    rows = []
    errors = []
    for start in range(0, len(boxes), step):
        chunk = boxes[start:start + step]
        try:
            rows.extend(estimate_rows(spec, partition, chunk, t0, tau, plan,
                                      cfg, master_seed))
        except Exception:
            # fall back to per-box so one bad box cannot take out a chunk
            for b in chunk:
                try:
                    rows.extend(estimate_rows(spec, partition, [b], t0, tau,
                                              plan, cfg, master_seed))
                except Exception as exc:  # noqa: BLE001 - collected per row
                    errors.append((int(b), str(exc)))
    return OperatorEstimate(rows=rows, errors=errors)
