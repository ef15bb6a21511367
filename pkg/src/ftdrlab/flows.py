"""Dynamical systems, domains, and time integration of the flow map.

Drift and diffusion callables are vectorized: they take (t, X, params) with X
of shape (n, d) and return (n, d) velocities / (n, d, d) diffusion matrices.
All integrators operate on batches of points; stochastic schemes draw their
increments from the counter-keyed noise module, so a batch of trajectories that
shares a (box, realization) pair shares one Brownian path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import noise


class FlowError(RuntimeError):
    """Raised when integration produces a non-finite state."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class OutsideDomainError(ValueError):
    pass


class UnknownSystemError(KeyError):
    pass


# ---------------------------------------------------------------------------
# Domains


@dataclass(frozen=True)
class Domain:
    """Flat state space: a 2-torus, an axis-aligned box, or all of R^d."""

    kind: str  # "torus2d" | "box" | "unbounded"
    dim: int
    lengths: Optional[tuple] = None  # torus edge lengths
    bounds: Optional[tuple] = None  # ((lo, hi), ...) per axis

    @staticmethod
    def torus2d(Lx: float, Ly: float) -> "Domain":
        if Lx <= 0 or Ly <= 0:
            raise ValueError("torus lengths must be positive")
        return Domain("torus2d", 2, lengths=(float(Lx), float(Ly)))

    @staticmethod
    def box(bounds) -> "Domain":
        bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
        for lo, hi in bounds:
            if not hi > lo:
                raise ValueError("box bounds must have hi > lo")
        return Domain("box", len(bounds), bounds=bounds)

    @staticmethod
    def unbounded(dim: int) -> "Domain":
        return Domain("unbounded", int(dim))

    def wrap(self, X: np.ndarray) -> np.ndarray:
        """Coordinates folded into [0, L) on the torus; identity elsewhere."""
        if self.kind != "torus2d":
            return X
        L = np.asarray(self.lengths)
        return X - L * np.floor(X / L)

    def minimal_image(self, D: np.ndarray) -> np.ndarray:
        """Smallest-norm periodic representative, components in (-L/2, L/2]."""
        if self.kind != "torus2d":
            return D
        L = np.asarray(self.lengths)
        return D - L * np.ceil(D / L - 0.5)

    def contains(self, X: np.ndarray) -> np.ndarray:
        if self.kind == "box":
            lo = np.array([b[0] for b in self.bounds])
            hi = np.array([b[1] for b in self.bounds])
            return np.all((X >= lo) & (X <= hi), axis=-1)
        return np.ones(np.asarray(X).shape[:-1], dtype=bool)


# ---------------------------------------------------------------------------
# System specification


@dataclass(frozen=True)
class DynamicsSpec:
    """One flow: drift b, diffusion sigma, and the domain they live on.

    ``diffusion`` is None for deterministic systems.  ``diffusion_const`` holds
    the constant d x d matrix of an additive-noise system (the builtin case);
    state-dependent noise supplies a ``diffusion`` callable instead and must be
    integrated with the Stratonovich-Heun scheme.
    """

    name: str
    dim: int
    drift: Callable
    params: dict
    domain: Domain
    diffusion: Optional[Callable] = None
    diffusion_const: Optional[np.ndarray] = None
    drift_jacobian: Optional[Callable] = None
    diffusion_jacobian: Optional[Callable] = None

    @property
    def is_stochastic(self) -> bool:
        if self.diffusion_const is not None:
            return bool(np.any(self.diffusion_const != 0.0))
        return self.diffusion is not None

    @property
    def has_state_dependent_noise(self) -> bool:
        return self.diffusion is not None and self.diffusion_const is None


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: str  # "rk4" | "euler_maruyama" | "stratonovich_heun"
    dt: float

    def __post_init__(self):
        if self.scheme not in ("rk4", "euler_maruyama", "stratonovich_heun"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


def _require_scheme(spec: DynamicsSpec, cfg: IntegratorConfig) -> None:
    if cfg.scheme == "rk4" and spec.is_stochastic:
        raise ValueError("rk4 is restricted to deterministic systems")
    if spec.has_state_dependent_noise and cfg.scheme == "euler_maruyama":
        raise ValueError(
            "state-dependent diffusion must use the stratonovich_heun scheme")


# ---------------------------------------------------------------------------
# Builtin systems


def _dg_f(x, t, A, eps, omega):
    s = eps * math.sin(omega * t)
    return s * x * x + (1.0 - 2.0 * s) * x, 2.0 * s * x + (1.0 - 2.0 * s), 2.0 * s


def make_double_gyre(A=1.0, eps=0.25, omega=2.0, sigma=(0.0, 0.0)) -> DynamicsSpec:
    """Periodically driven double gyre on the flat torus [0,2) x [0,1)."""
    params = {"A": float(A), "eps": float(eps), "omega": float(omega)}
    pi = np.pi

    def drift(t, X, p):
        f, dfdx, _ = _dg_f(X[..., 0], t, p["A"], p["eps"], p["omega"])
        y = X[..., 1]
        u = -pi * p["A"] * np.sin(pi * f) * np.cos(pi * y)
        v = pi * p["A"] * np.cos(pi * f) * np.sin(pi * y) * dfdx
        return np.stack([u, v], axis=-1)

    def drift_jacobian(t, X, p):
        f, dfdx, d2f = _dg_f(X[..., 0], t, p["A"], p["eps"], p["omega"])
        y = X[..., 1]
        sf, cf = np.sin(pi * f), np.cos(pi * f)
        sy, cy = np.sin(pi * y), np.cos(pi * y)
        J = np.empty(X.shape[:-1] + (2, 2))
        J[..., 0, 0] = -pi * pi * p["A"] * cf * cy * dfdx
        J[..., 0, 1] = pi * pi * p["A"] * sf * sy
        J[..., 1, 0] = pi * p["A"] * sy * (-pi * sf * dfdx * dfdx + cf * d2f)
        J[..., 1, 1] = pi * pi * p["A"] * cf * cy * dfdx
        return J

    sigma = np.asarray(sigma, dtype=float)
    const = np.diag(sigma) if np.any(sigma != 0.0) else None
    return DynamicsSpec(
        name="double_gyre", dim=2, drift=drift, params=params,
        domain=Domain.torus2d(2.0, 1.0),
        diffusion_const=const, drift_jacobian=drift_jacobian)


def make_hills_vortex(U=2.0, a0=2.0, a1=0.12, a2=2.2, sigma=(0.0, 0.0, 0.0)) -> DynamicsSpec:
    """Hill's spherical vortex with a pulsating radius a(t) = a0 + a1 sin(a2 t).

    The velocity is assembled in cylindrical-Cartesian form so the z-axis is
    regular: the planar components carry explicit factors of x and y.
    """
    params = {"U": float(U), "a0": float(a0), "a1": float(a1), "a2": float(a2)}

    def _radius(t, p):
        return p["a0"] + p["a1"] * math.sin(p["a2"] * t)

    def drift(t, X, p):
        a = _radius(t, p)
        U_ = p["U"]
        x, y, z = X[..., 0], X[..., 1], X[..., 2]
        rho2 = x * x + y * y
        r2 = rho2 + z * z
        inner = r2 < a * a
        out = np.empty_like(X)
        # interior: solid-body-like dipole circulation
        c = 1.5 * U_ / (a * a)
        out[..., 0] = -c * x * z
        out[..., 1] = -c * y * z
        out[..., 2] = -1.5 * U_ + c * (z * z + 2.0 * rho2)
        # exterior: potential dipole
        r2s = np.where(inner, 1.0, r2)  # keep the masked branch finite
        r5 = r2s * r2s * np.sqrt(r2s)
        k = 1.5 * U_ * a**3 / r5
        q = 0.5 * U_ * a**3
        vx = -k * x * z
        vy = -k * y * z
        vz = U_ - q * (2.0 * z * z - rho2) / r5
        out[..., 0] = np.where(inner, out[..., 0], vx)
        out[..., 1] = np.where(inner, out[..., 1], vy)
        out[..., 2] = np.where(inner, out[..., 2], vz)
        return out

    def drift_jacobian(t, X, p):
        a = _radius(t, p)
        U_ = p["U"]
        x, y, z = X[..., 0], X[..., 1], X[..., 2]
        rho2 = x * x + y * y
        r2 = rho2 + z * z
        inner = r2 < a * a
        J = np.empty(X.shape[:-1] + (3, 3))
        c = 1.5 * U_ / (a * a)
        J[..., 0, 0] = -c * z
        J[..., 0, 1] = 0.0
        J[..., 0, 2] = -c * x
        J[..., 1, 0] = 0.0
        J[..., 1, 1] = -c * z
        J[..., 1, 2] = -c * y
        J[..., 2, 0] = 4.0 * c * x
        J[..., 2, 1] = 4.0 * c * y
        J[..., 2, 2] = 2.0 * c * z
        r2s = np.where(inner, 1.0, r2)
        r5 = r2s * r2s * np.sqrt(r2s)
        k = 1.5 * U_ * a**3 / r5
        q = 0.5 * U_ * a**3
        w = 2.0 * z * z - rho2
        Jo = np.empty_like(J)
        Jo[..., 0, 0] = -k * z + 5.0 * k * x * x * z / r2s
        Jo[..., 0, 1] = 5.0 * k * x * y * z / r2s
        Jo[..., 0, 2] = -k * x + 5.0 * k * x * z * z / r2s
        Jo[..., 1, 0] = Jo[..., 0, 1]
        Jo[..., 1, 1] = -k * z + 5.0 * k * y * y * z / r2s
        Jo[..., 1, 2] = -k * y + 5.0 * k * y * z * z / r2s
        Jo[..., 2, 0] = q * x / r5 * (2.0 + 5.0 * w / r2s)
        Jo[..., 2, 1] = q * y / r5 * (2.0 + 5.0 * w / r2s)
        Jo[..., 2, 2] = -q * z / r5 * (4.0 - 5.0 * w / r2s)
        mask = inner[..., None, None]
        return np.where(mask, J, Jo)

    sigma = np.asarray(sigma, dtype=float)
    const = np.diag(sigma) if np.any(sigma != 0.0) else None
    return DynamicsSpec(
        name="hills_vortex", dim=3, drift=drift, params=params,
        domain=Domain.unbounded(3),
        diffusion_const=const, drift_jacobian=drift_jacobian)


def make_linear(A, sigma=None, name="linear", domain=None) -> DynamicsSpec:
    """dX = A X dt + sigma dW with constant matrix A and constant diffusion."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[0]
    if A.shape != (d, d):
        raise ValueError("A must be square")
    params = {}

    def drift(t, X, p):
        return X @ A.T

    def drift_jacobian(t, X, p):
        return np.broadcast_to(A, X.shape[:-1] + (d, d))

    const = None
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)
        const = np.diag(sigma) if sigma.ndim == 1 else sigma
        if not np.any(const != 0.0):
            const = None
    return DynamicsSpec(
        name=name, dim=d, drift=drift, params=params,
        domain=domain or Domain.unbounded(d),
        diffusion_const=const, drift_jacobian=drift_jacobian)


def make_translation(c, sigma=None) -> DynamicsSpec:
    """dX = c dt (+ additive noise): rigid translation."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    d = c.shape[0]

    def drift(t, X, p):
        return np.broadcast_to(c, X.shape).copy()

    def drift_jacobian(t, X, p):
        return np.zeros(X.shape[:-1] + (d, d))

    const = None
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)
        const = np.diag(sigma) if sigma.ndim == 1 else sigma
        if not np.any(const != 0.0):
            const = None
    return DynamicsSpec(
        name="translation", dim=d, drift=drift, params={},
        domain=Domain.unbounded(d),
        diffusion_const=const, drift_jacobian=drift_jacobian)


def make_geometric_1d(a, s) -> DynamicsSpec:
    """Scalar Stratonovich flow dy = a y dt + s y o dW (oracle system)."""
    a, s = float(a), float(s)

    def drift(t, X, p):
        return a * X

    def drift_jacobian(t, X, p):
        return np.full(X.shape[:-1] + (1, 1), a)

    def diffusion(t, X, p):
        return s * X[..., None]

    def diffusion_jacobian(t, X, p):
        return np.full(X.shape[:-1] + (1, 1, 1), s)

    return DynamicsSpec(
        name="geometric_1d", dim=1, drift=drift, params={"a": a, "s": s},
        domain=Domain.unbounded(1),
        diffusion=diffusion, diffusion_jacobian=diffusion_jacobian,
        drift_jacobian=drift_jacobian)


def make_rotation_2d(omega=1.0, angle_noise=0.0) -> DynamicsSpec:
    """Rigid rotation; optional Stratonovich noise along the angular direction
    (radius-preserving, so the flow stays an isometry realization by
    realization)."""
    w, s = float(omega), float(angle_noise)

    def drift(t, X, p):
        return np.stack([-w * X[..., 1], w * X[..., 0]], axis=-1)

    def drift_jacobian(t, X, p):
        J = np.zeros(X.shape[:-1] + (2, 2))
        J[..., 0, 1] = -w
        J[..., 1, 0] = w
        return J

    diffusion = None
    diffusion_jacobian = None
    if s != 0.0:
        def diffusion(t, X, p):
            G = np.zeros(X.shape[:-1] + (2, 2))
            G[..., 0, 0] = -s * X[..., 1]
            G[..., 1, 0] = s * X[..., 0]
            return G

        def diffusion_jacobian(t, X, p):
            # indexed [..., k, i, j] = d sigma_k,i / d x_j
            Gj = np.zeros(X.shape[:-1] + (2, 2, 2))
            Gj[..., 0, 0, 1] = -s
            Gj[..., 0, 1, 0] = s
            return Gj

    return DynamicsSpec(
        name="rotation_2d", dim=2, drift=drift,
        params={"omega": w, "angle_noise": s},
        domain=Domain.unbounded(2),
        diffusion=diffusion, diffusion_jacobian=diffusion_jacobian,
        drift_jacobian=drift_jacobian)


BUILTIN_SYSTEMS = ("double_gyre", "hills_vortex", "linear", "translation")


def build_system(name: str, params: dict) -> DynamicsSpec:
    """Construct a builtin system from CLI-style parameters."""
    p = dict(params)
    sigma = p.pop("sigma", None)
    if name == "double_gyre":
        spec = make_double_gyre(
            A=p.pop("A", 1.0), eps=p.pop("eps", 0.25), omega=p.pop("omega", 2.0),
            sigma=sigma if sigma is not None else (0.0, 0.0))
    elif name == "hills_vortex":
        spec = make_hills_vortex(
            U=p.pop("U", 2.0), a0=p.pop("a0", 2.0), a1=p.pop("a1", 0.12),
            a2=p.pop("a2", 2.2),
            sigma=sigma if sigma is not None else (0.0, 0.0, 0.0))
    elif name == "linear":
        spec = make_linear(p.pop("matrix"), sigma=sigma)
    elif name == "translation":
        spec = make_translation(p.pop("velocity"), sigma=sigma)
    else:
        raise UnknownSystemError(name)
    if p:
        raise ValueError(f"unknown parameters for {name}: {sorted(p)}")
    return spec


# ---------------------------------------------------------------------------
# Point-wise evaluation (the spec-level contract; batch paths below)


def eval_drift(spec: DynamicsSpec, t: float, x) -> np.ndarray:
    """Drift velocity b(t, x) at a single point."""
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.dim,):
        raise ValueError(f"point must have shape ({spec.dim},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("point must be finite")
    if spec.domain.kind == "box" and not spec.domain.contains(x):
        raise OutsideDomainError(f"{x} outside box domain")
    return np.asarray(spec.drift(t, x[None, :], spec.params))[0]


def eval_diffusion(spec: DynamicsSpec, t: float, x) -> np.ndarray:
    """Diffusion matrix sigma(t, x) at a single point (zeros if none)."""
    x = np.asarray(x, dtype=float)
    if spec.diffusion_const is not None:
        return np.array(spec.diffusion_const)
    if spec.diffusion is None:
        return np.zeros((spec.dim, spec.dim))
    return np.asarray(spec.diffusion(t, x[None, :], spec.params))[0]


# ---------------------------------------------------------------------------
# Time stepping


def step_sizes(tau: float, dt: float):
    """Signed step sequence covering tau exactly; the last step may be short."""
    if tau == 0.0:
        return np.zeros(0)
    sign = 1.0 if tau > 0 else -1.0
    atau = abs(tau)
    n_full = int(math.floor(atau / dt + 1e-12))
    rem = atau - n_full * dt
    if rem < 1e-12 * max(1.0, atau):
        rem = 0.0
    steps = [dt] * n_full + ([rem] if rem > 0.0 else [])
    return sign * np.asarray(steps)


class SharedNoise:
    """Per-step Brownian increments for a batch of trajectories.

    ``groups`` maps each trajectory to its (box, realization) noise group; all
    trajectories in a group receive the same path, which is the shared-noise
    pairing the centred flow requires.  ``sample`` is zero for shared paths
    and the per-trajectory sample index in debug independent-noise mode.
    """

    def __init__(self, master_seed, box, realization, group_map, dim,
                 sample=0, backward=False, step_offset=0):
        self.master_seed = int(master_seed)
        box, realization = np.broadcast_arrays(
            np.atleast_1d(np.asarray(box)), np.atleast_1d(np.asarray(realization)))
        self.box = box.astype(np.uint64)
        self.realization = realization.astype(np.uint64)
        self.sample = sample
        self.group_map = None if group_map is None else np.asarray(group_map)
        self.dim = int(dim)
        self.backward = bool(backward)
        self.step_offset = int(step_offset)

    def increments(self, step_index: int, dt_abs: float) -> np.ndarray:
        z = noise.standard_normals(
            self.master_seed, self.box, self.realization, self.sample,
            self.step_offset + step_index, self.dim,
            purpose=noise.PURPOSE_PATH, backward=self.backward)
        dW = math.sqrt(dt_abs) * z
        if self.group_map is not None:
            dW = dW[self.group_map]
        return dW


def _apply_diffusion(spec, t, Xw, dW):
    if spec.diffusion_const is not None:
        return dW @ spec.diffusion_const.T
    G = np.asarray(spec.diffusion(t, Xw, spec.params))
    return np.einsum("nij,nj->ni", G, dW)


def advance_batch(spec: DynamicsSpec, t0: float, tau: float, X0: np.ndarray,
                  cfg: IntegratorConfig, shared_noise: Optional[SharedNoise] = None,
                  check_finite: bool = True) -> np.ndarray:
    """Integrate a batch of points over [t0, t0+tau]; returns unwrapped states.

    Drift and diffusion are always evaluated at torus-wrapped coordinates, but
    the running state is left unwrapped so displacements can be formed without
    seam bookkeeping.
    """
    _require_scheme(spec, cfg)
    X = np.array(X0, dtype=float)
    if tau != 0.0 and cfg.dt > abs(tau) * (1.0 + 1e-12):
        raise ValueError("dt must not exceed |tau|")
    steps = step_sizes(tau, cfg.dt)
    if spec.is_stochastic and shared_noise is None and cfg.scheme != "rk4":
        raise ValueError("stochastic integration needs a noise source")
    t = t0
    dom = spec.domain
    p = spec.params
    for j, h in enumerate(steps):
        if spec.is_stochastic:
            dW = shared_noise.increments(j, abs(h))
        if cfg.scheme == "rk4":
            k1 = spec.drift(t, dom.wrap(X), p)
            k2 = spec.drift(t + 0.5 * h, dom.wrap(X + 0.5 * h * k1), p)
            k3 = spec.drift(t + 0.5 * h, dom.wrap(X + 0.5 * h * k2), p)
            k4 = spec.drift(t + h, dom.wrap(X + h * k3), p)
            X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        elif cfg.scheme == "euler_maruyama":
            Xw = dom.wrap(X)
            X = X + h * spec.drift(t, Xw, p)
            if spec.is_stochastic:
                X = X + _apply_diffusion(spec, t, Xw, dW)
        else:  # stratonovich_heun
            Xw = dom.wrap(X)
            F1 = spec.drift(t, Xw, p)
            G1 = _apply_diffusion(spec, t, Xw, dW) if spec.is_stochastic else 0.0
            Xp = X + h * F1 + G1
            Xpw = dom.wrap(Xp)
            F2 = spec.drift(t + h, Xpw, p)
            G2 = _apply_diffusion(spec, t + h, Xpw, dW) if spec.is_stochastic else 0.0
            X = X + 0.5 * h * (F1 + F2) + 0.5 * (G1 + G2)
        t = t + h
        if check_finite and not np.all(np.isfinite(X)):
            raise FlowError(f"non-finite state at step {j}", step_index=j)
    return X


def flow_map(spec: DynamicsSpec, t0: float, tau: float, x0,
             key: Optional[noise.NoiseKey] = None,
             cfg: IntegratorConfig = IntegratorConfig("rk4", 1e-2),
             step_offset: int = 0) -> np.ndarray:
    """The flow map phi_{t0+tau, t0}(x0, omega) for a single point.

    ``key`` supplies the noise stream prefix (master seed / box / realization /
    sample) for stochastic systems; ``step_offset`` shifts the step counter so
    flows can be composed on the step grid with identical increments.
    """
    x0 = np.asarray(x0, dtype=float)
    if tau == 0.0:
        return spec.domain.wrap(x0.copy())
    sn = None
    if spec.is_stochastic:
        if key is None:
            key = noise.NoiseKey(master_seed=0)
        sn = SharedNoise(key.master_seed, key.box_index, key.realization_index,
                         None, spec.dim, sample=key.sample_index,
                         backward=tau < 0, step_offset=step_offset)
    out = advance_batch(spec, t0, tau, x0[None, :], cfg, shared_noise=sn)
    return spec.domain.wrap(out[0])


def centred_flow_batch(spec: DynamicsSpec, t0: float, tau: float, center,
                       offsets, realization: int,
                       cfg: IntegratorConfig,
                       master_seed: int = 0, box_index: int = 0) -> np.ndarray:
    """Displacements Phi^x(v, omega) = phi(x+v, omega) - phi(x, omega).

    The centre and every offset point ride the same Brownian path (one noise
    group per realization), and torus displacements take the minimal image.
    """
    center = np.asarray(center, dtype=float)
    offsets = np.atleast_2d(np.asarray(offsets, dtype=float))
    pts = np.vstack([center[None, :], center[None, :] + offsets])
    if spec.domain.kind == "box":
        inside = spec.domain.contains(pts)
        if not np.all(inside):
            raise OutsideDomainError("center or offset outside box domain")
    sn = None
    if spec.is_stochastic:
        sn = SharedNoise(master_seed, box_index, realization,
                         np.zeros(len(pts), dtype=np.intp), spec.dim,
                         backward=tau < 0)
    out = advance_batch(spec, t0, tau, pts, cfg, shared_noise=sn)
    disp = out[1:] - out[0]
    return spec.domain.minimal_image(disp)
