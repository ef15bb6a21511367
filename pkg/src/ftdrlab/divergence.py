"""Convex-generator divergences on discrete distributions.

Implements the generator family (KL, Hellinger, total variation, chi-squared,
chi-alpha, alpha), the set-oriented divergence over a common bin set with the
0 log 0 := 0 and mass-on-empty-reference := +inf conventions, coarse-graining,
Markov-kernel monotonicity checks, and the Donsker-Varadhan lower bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

_KINDS = ("kl", "hellinger", "total_variation", "chi_squared", "chi_alpha", "alpha")

PROB_TOL = 1e-12  # distribution mass must equal 1 to this tolerance
MONO_TOL = 1e-10  # slack for monotonicity / convexity comparisons


@dataclass(frozen=True)
class DivergenceKind:
    kind: str
    alpha: Optional[float] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown divergence kind {self.kind!r}")
        if self.kind == "chi_alpha":
            if self.alpha is None or self.alpha < 1.0:
                raise ValueError("chi_alpha requires alpha >= 1")
        if self.kind == "alpha" and self.alpha is None:
            raise ValueError("alpha divergence requires a parameter")


KL = DivergenceKind("kl")
HELLINGER = DivergenceKind("hellinger")
TOTAL_VARIATION = DivergenceKind("total_variation")
CHI_SQUARED = DivergenceKind("chi_squared")


def chi_alpha(alpha: float) -> DivergenceKind:
    return DivergenceKind("chi_alpha", float(alpha))


def alpha_divergence(alpha: float) -> DivergenceKind:
    return DivergenceKind("alpha", float(alpha))


def phi_eval(kind: DivergenceKind, u: float) -> float:
    """Generator value phi(u) for u >= 0, with u = 0 taken as the limit."""
    if u < 0.0:
        raise ValueError("generator argument must be nonnegative")
    k = kind.kind
    if k == "kl":
        if u == 0.0:
            return 1.0
        return u * math.log(u) - u + 1.0
    if k == "hellinger":
        return (math.sqrt(u) - 1.0) ** 2
    if k == "total_variation":
        return 0.5 * abs(u - 1.0)
    if k == "chi_squared":
        return (u - 1.0) ** 2
    if k == "chi_alpha":
        return abs(u - 1.0) ** kind.alpha
    # alpha family, with the table's case split at alpha = +-1
    a = kind.alpha
    if a == 1.0:
        return 0.0 if u == 0.0 else u * math.log(u)
    if a == -1.0:
        return math.inf if u == 0.0 else -math.log(u)
    if u == 0.0:
        if a < -1.0:
            return math.inf
        return 4.0 / (1.0 - a * a)
    return 4.0 / (1.0 - a * a) * (1.0 - u ** ((1.0 + a) / 2.0))


def phi_tail_slope(kind: DivergenceKind) -> float:
    """lim_{u->inf} phi(u)/u: the per-unit-mass cost on bins where the
    reference vanishes."""
    k = kind.kind
    if k in ("kl", "chi_squared"):
        return math.inf
    if k == "hellinger":
        return 1.0
    if k == "total_variation":
        return 0.5
    if k == "chi_alpha":
        return math.inf if kind.alpha > 1.0 else 1.0
    a = kind.alpha
    if a == 1.0:
        return math.inf
    if a > 1.0:
        return math.inf
    return 0.0  # a < 1, including a <= -1


@dataclass(frozen=True)
class DiscreteDistribution:
    """Sparse probability vector: bin index -> weight."""

    weights: dict

    def __post_init__(self):
        total = 0.0
        for key, w in self.weights.items():
            if w < 0.0:
                raise ValueError(f"negative weight at bin {key!r}")
            total += w
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")

    def __getitem__(self, key):
        return self.weights.get(key, 0.0)

    @property
    def support(self):
        return {k for k, w in self.weights.items() if w > 0.0}

    @staticmethod
    def from_array(values) -> "DiscreteDistribution":
        arr = np.asarray(values, dtype=float)
        return DiscreteDistribution({i: float(v) for i, v in enumerate(arr) if v != 0.0})


def divergence(kind: DivergenceKind, p: DiscreteDistribution,
               q: DiscreteDistribution) -> float:
    """Set-oriented divergence sum_A phi(p(A)/q(A)) q(A) over the common bins.

    Bins with q(A) = 0 but p(A) > 0 contribute p(A) * lim phi(u)/u, which for
    the KL generator is +inf (the stated convention).  Bins where both vanish
    contribute nothing.
    """
    total = 0.0
    bins = set(p.weights) | set(q.weights)
    slope = None
    for b in bins:
        pb = p[b]
        qb = q[b]
        if qb > 0.0:
            total += phi_eval(kind, pb / qb) * qb
        elif pb > 0.0:
            if slope is None:
                slope = phi_tail_slope(kind)
            total += slope * pb
            if math.isinf(total):
                return math.inf
    return total


def merge_bins(p: DiscreteDistribution, q: DiscreteDistribution, partition: dict):
    """Coarse-grain both distributions through the bin -> group map.

    A deterministic Markov kernel, so divergence can only decrease.
    """
    for b in set(p.support) | set(q.support):
        if b not in partition:
            raise KeyError(f"partition does not cover bin {b!r}")

    def group(dist):
        out = {}
        for b, w in dist.weights.items():
            g = partition[b]
            out[g] = out.get(g, 0.0) + w
        return DiscreteDistribution(out)

    return group(p), group(q)


def kernel_monotonicity_check(kind: DivergenceKind, p, q, kernel) -> bool:
    """True iff pushing p, q through the row-stochastic kernel does not
    increase the divergence (information monotonicity), within MONO_TOL.

    p and q must be index-aligned with the kernel rows (dense arrays or
    DiscreteDistributions over 0..n-1).
    """
    kernel = np.asarray(kernel, dtype=float)
    if kernel.ndim != 2:
        raise ValueError("kernel must be a matrix")
    if np.any(kernel < 0.0) or np.any(np.abs(kernel.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("kernel rows must be nonnegative and sum to 1")
    n = kernel.shape[0]

    def dense(dist):
        if isinstance(dist, DiscreteDistribution):
            arr = np.zeros(n)
            for b, w in dist.weights.items():
                arr[b] = w
            return arr
        return np.asarray(dist, dtype=float)

    pv, qv = dense(p), dense(q)
    before = divergence(kind, DiscreteDistribution.from_array(pv),
                        DiscreteDistribution.from_array(qv))
    after = divergence(kind, DiscreteDistribution.from_array(pv @ kernel),
                       DiscreteDistribution.from_array(qv @ kernel))
    if math.isinf(before):
        return True
    return after <= before + MONO_TOL


def donsker_varadhan_lb(p: DiscreteDistribution, q: DiscreteDistribution,
                        f: dict | np.ndarray) -> float:
    """<f, p> - log <e^f, q>: a lower bound for KL(p || q) at any finite f,
    tight at f = log(p/q)."""
    bins = sorted(set(p.weights) | set(q.weights), key=repr)
    if isinstance(f, dict):
        fv = np.array([f.get(b, 0.0) for b in bins], dtype=float)
    else:
        fv = np.asarray(f, dtype=float)
        bins = list(range(len(fv)))
    if not np.all(np.isfinite(fv)):
        raise ValueError("f must be finite")
    pv = np.array([p[b] for b in bins])
    qv = np.array([q[b] for b in bins])
    mean_f = float(pv @ fv)
    # log-sum-exp over the support of q
    mask = qv > 0.0
    fmax = np.max(fv[mask])
    lse = fmax + math.log(float(np.sum(qv[mask] * np.exp(fv[mask] - fmax))))
    return mean_f - lse
