"""Derivative-flow integration and Lyapunov-type functionals.

The tangent matrix is co-integrated with the base trajectory using the same
discretization as the base scheme, which makes it the exact derivative of the
discrete flow map: finite differences of ``flow_map`` (same noise keys) agree
with it to the finite-difference truncation error.

Singular values come from the symmetric eigenproblem of the Cauchy-Green
matrix M = Dphi^T Dphi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import noise
from .flows import (DynamicsSpec, IntegratorConfig, SharedNoise, FlowError,
                    _require_scheme, step_sizes)


class DegenerateJacobianError(RuntimeError):
    pass


@dataclass(frozen=True)
class TangentState:
    base_point: np.ndarray  # phi_{t0+tau,t0}(x), wrapped
    jacobian: np.ndarray  # Dphi_{t0+tau,t0}(x, omega)


@dataclass(frozen=True)
class LyapunovSample:
    ftle_max: float
    ftle_min: float
    singular_values: np.ndarray  # descending
    realization: int


# ---------------------------------------------------------------------------
# Jacobian fields (analytic when the spec carries one, else central diffs)

_FD_STEP = 1e-6


def _drift_jacobian(spec, t, X):
    if spec.drift_jacobian is not None:
        return np.asarray(spec.drift_jacobian(t, X, spec.params))
    d = spec.dim
    J = np.empty(X.shape[:-1] + (d, d))
    scale = _FD_STEP * np.maximum(1.0, np.linalg.norm(X, axis=-1))
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        h = scale[..., None] * e
        J[..., :, j] = (spec.drift(t, X + h, spec.params)
                        - spec.drift(t, X - h, spec.params)) / (2.0 * scale[..., None])
    return J


def _diffusion_jacobian(spec, t, X):
    """d sigma_k,i / d x_j, indexed [..., k, i, j]; None for additive noise."""
    if not spec.has_state_dependent_noise:
        return None
    if spec.diffusion_jacobian is not None:
        return np.asarray(spec.diffusion_jacobian(t, X, spec.params))
    d = spec.dim
    G = np.empty(X.shape[:-1] + (d, d, d))
    scale = _FD_STEP * np.maximum(1.0, np.linalg.norm(X, axis=-1))
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        h = scale[..., None] * e
        dG = (np.asarray(spec.diffusion(t, X + h, spec.params))
              - np.asarray(spec.diffusion(t, X - h, spec.params)))
        G[..., :, j] = np.swapaxes(dG, -1, -2) / (2.0 * scale[..., None, None])
    return G


def _tangent_noise_term(spec, t, Xw, Y, dW):
    """sum_k (grad sigma_k) Y dW_k, or None when the noise is additive."""
    Gj = _diffusion_jacobian(spec, t, Xw)
    if Gj is None:
        return None
    # Gj: (n, k, i, j); Y: (n, j, m); dW: (n, k)
    return np.einsum("nkij,njm,nk->nim", Gj, Y, dW)


# ---------------------------------------------------------------------------
# Co-integration of (x, Y)


def derivative_flow_batch(spec: DynamicsSpec, t0: float, tau: float,
                          X0: np.ndarray, cfg: IntegratorConfig,
                          shared_noise: Optional[SharedNoise] = None):
    """Integrate base points and tangent matrices together.

    Returns (X, Y): final unwrapped base states (n, d) and Jacobians (n, d, d).
    The stepping mirrors ``flows.advance_batch`` stage for stage so Y is the
    exact derivative of the discrete map produced there.
    """
    _require_scheme(spec, cfg)
    X = np.array(X0, dtype=float)
    n, d = X.shape
    Y = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    steps = step_sizes(tau, cfg.dt)
    if spec.is_stochastic and shared_noise is None:
        raise ValueError("stochastic tangent integration needs a noise source")
    t = t0
    dom = spec.domain
    p = spec.params
    for j, h in enumerate(steps):
        if spec.is_stochastic:
            dW = shared_noise.increments(j, abs(h))
        if cfg.scheme == "rk4":
            Xw = dom.wrap(X)
            k1 = spec.drift(t, Xw, p)
            K1 = _drift_jacobian(spec, t, Xw) @ Y
            X2 = dom.wrap(X + 0.5 * h * k1)
            k2 = spec.drift(t + 0.5 * h, X2, p)
            K2 = _drift_jacobian(spec, t + 0.5 * h, X2) @ (Y + 0.5 * h * K1)
            X3 = dom.wrap(X + 0.5 * h * k2)
            k3 = spec.drift(t + 0.5 * h, X3, p)
            K3 = _drift_jacobian(spec, t + 0.5 * h, X3) @ (Y + 0.5 * h * K2)
            X4 = dom.wrap(X + h * k3)
            k4 = spec.drift(t + h, X4, p)
            K4 = _drift_jacobian(spec, t + h, X4) @ (Y + h * K3)
            X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            Y = Y + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
        elif cfg.scheme == "euler_maruyama":
            Xw = dom.wrap(X)
            Xn = X + h * spec.drift(t, Xw, p)
            Yn = Y + h * (_drift_jacobian(spec, t, Xw) @ Y)
            if spec.is_stochastic:
                from .flows import _apply_diffusion
                Xn = Xn + _apply_diffusion(spec, t, Xw, dW)
                gY = _tangent_noise_term(spec, t, Xw, Y, dW)
                if gY is not None:
                    Yn = Yn + gY
            X, Y = Xn, Yn
        else:  # stratonovich_heun
            from .flows import _apply_diffusion
            Xw = dom.wrap(X)
            F1 = spec.drift(t, Xw, p)
            J1 = _drift_jacobian(spec, t, Xw) @ Y
            G1 = _apply_diffusion(spec, t, Xw, dW) if spec.is_stochastic else 0.0
            gY1 = _tangent_noise_term(spec, t, Xw, Y, dW) if spec.is_stochastic else None
            Xp = X + h * F1 + G1
            Yp = Y + h * J1 + (gY1 if gY1 is not None else 0.0)
            Xpw = dom.wrap(Xp)
            F2 = spec.drift(t + h, Xpw, p)
            J2 = _drift_jacobian(spec, t + h, Xpw) @ Yp
            G2 = _apply_diffusion(spec, t + h, Xpw, dW) if spec.is_stochastic else 0.0
            gY2 = _tangent_noise_term(spec, t + h, Xpw, Yp, dW) if spec.is_stochastic else None
            X = X + 0.5 * h * (F1 + F2) + 0.5 * (G1 + G2)
            Y = Y + 0.5 * h * (J1 + J2)
            if gY1 is not None:
                Y = Y + 0.5 * (gY1 + gY2)
        t = t + h
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(Y)):
            raise FlowError(f"non-finite tangent state at step {j}", step_index=j)
    return X, Y


def derivative_flow(spec: DynamicsSpec, t0: float, tau: float, x,
                    realization: int, cfg: IntegratorConfig,
                    master_seed: int = 0, box_index: int = 0) -> TangentState:
    """Dphi_{t0+tau,t0}(x, omega) along the noise path of ``realization``."""
    x = np.asarray(x, dtype=float)
    sn = None
    if spec.is_stochastic:
        sn = SharedNoise(master_seed, box_index, realization, None, spec.dim,
                         backward=tau < 0)
    X, Y = derivative_flow_batch(spec, t0, tau, x[None, :], cfg, shared_noise=sn)
    jac = Y[0]
    det = np.linalg.det(jac)
    if abs(det) < 1e-300:
        raise DegenerateJacobianError(f"|det| = {abs(det):g}")
    return TangentState(base_point=spec.domain.wrap(X[0]), jacobian=jac)


def _batched_jacobians(spec, t0, tau, x, realizations, cfg, master_seed, box_index):
    """Jacobians for one point over a list of realizations, shared base point."""
    x = np.asarray(x, dtype=float)
    L = len(realizations)
    X0 = np.broadcast_to(x, (L, spec.dim)).copy()
    sn = None
    if spec.is_stochastic:
        sn = SharedNoise(master_seed, np.full(L, box_index), np.asarray(realizations),
                         None, spec.dim, backward=tau < 0)
    _, Y = derivative_flow_batch(spec, t0, tau, X0, cfg, shared_noise=sn)
    return Y


def singular_values(jac: np.ndarray) -> np.ndarray:
    """Descending singular values via the Cauchy-Green eigenproblem."""
    M = np.swapaxes(jac, -1, -2) @ jac
    w = np.linalg.eigvalsh(M)
    return np.sqrt(np.clip(w[..., ::-1], 0.0, None))


def lyapunov_sample(spec, t0, tau, x, realization, cfg,
                    master_seed=0, box_index=0) -> LyapunovSample:
    ts = derivative_flow(spec, t0, tau, x, realization, cfg,
                         master_seed=master_seed, box_index=box_index)
    sv = singular_values(ts.jacobian)
    atau = abs(tau)
    return LyapunovSample(
        ftle_max=float(np.log(sv[0]) / atau),
        ftle_min=float(np.log(sv[-1]) / atau),
        singular_values=sv, realization=realization)


def ftle_max(spec, t0, tau, x, realization, cfg, master_seed=0, box_index=0) -> float:
    """Largest finite-time Lyapunov exponent, log ||Dphi|| / |tau|."""
    if tau == 0.0:
        raise ValueError("tau must be nonzero")
    return lyapunov_sample(spec, t0, tau, x, realization, cfg,
                           master_seed, box_index).ftle_max


def ftle_min(spec, t0, tau, x, realization, cfg, master_seed=0, box_index=0) -> float:
    """Minimal finite-time Lyapunov exponent from the smallest singular value."""
    if tau == 0.0:
        raise ValueError("tau must be nonzero")
    return lyapunov_sample(spec, t0, tau, x, realization, cfg,
                           master_seed, box_index).ftle_min


def _resolve_directions(y_dirs, dim, master_seed, box_index):
    if isinstance(y_dirs, str):
        parts = y_dirs.replace("-", " ").replace("_", " ").split()
        if parts[:2] != ["uniform", "sphere"] or len(parts) != 3:
            raise ValueError(f"unrecognized direction spec {y_dirs!r}")
        return noise.unit_directions(master_seed, int(parts[2]), dim, box=box_index)
    dirs = np.atleast_2d(np.asarray(y_dirs, dtype=float))
    norms = np.linalg.norm(dirs, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero direction vector")
    return dirs / norms[:, None]


def ftle_stoch_avg(spec, t0, tau, x, y_dirs, L, cfg, master_seed=0, box_index=0):
    """Monte Carlo average of log(|Dphi y| / |y|) / |tau| over realizations and
    directions.  Returns (mean, stderr); stderr is over realizations, with the
    direction average taken inside each realization."""
    if L < 1:
        raise ValueError("L must be >= 1")
    dirs = _resolve_directions(y_dirs, spec.dim, master_seed, box_index)
    Y = _batched_jacobians(spec, t0, tau, x, np.arange(L), cfg, master_seed, box_index)
    img = np.einsum("lij,kj->lki", Y, dirs)
    growth = np.log(np.linalg.norm(img, axis=-1)) / abs(tau)  # (L, K)
    per_real = growth.mean(axis=1)
    mean = float(per_real.mean())
    stderr = float(per_real.std(ddof=1) / math.sqrt(L)) if L > 1 else 0.0
    return mean, stderr


def moment_exponent(spec, t0, tau, x, y, p, L, cfg, master_seed=0, box_index=0):
    """Finite-time moment exponent log E[(|Dphi y|/|y|)^p] / |tau|.

    Returns (value, stderr); stderr propagates the Monte Carlo error of the
    mean through the logarithm (delta method).
    """
    if tau == 0.0:
        raise ValueError("tau must be nonzero")
    if L < 1:
        raise ValueError("L must be >= 1")
    y = np.asarray(y, dtype=float)
    ny = np.linalg.norm(y)
    if ny == 0.0:
        raise ValueError("zero direction vector")
    y = y / ny
    Y = _batched_jacobians(spec, t0, tau, x, np.arange(L), cfg, master_seed, box_index)
    ratios = np.linalg.norm(Y @ y, axis=-1)
    with np.errstate(over="raise"):
        try:
            powers = ratios**p
            m = float(powers.mean())
        except FloatingPointError:
            raise OverflowError(f"moment overflow at p = {p}; try smaller |p|")
    if not np.isfinite(m) or m <= 0.0:
        raise OverflowError(f"moment overflow at p = {p}; try smaller |p|")
    value = math.log(m) / abs(tau)
    stderr = 0.0
    if L > 1:
        stderr = float(powers.std(ddof=1) / math.sqrt(L) / m / abs(tau))
    return value, stderr


def sum_exponents_functional(spec, t0, tau, x, p, L, cfg, master_seed=0, box_index=0):
    """log E[|det Dphi|^p] / |tau| (volume-growth moment functional)."""
    if tau == 0.0:
        raise ValueError("tau must be nonzero")
    Y = _batched_jacobians(spec, t0, tau, x, np.arange(L), cfg, master_seed, box_index)
    dets = np.abs(np.linalg.det(Y))
    with np.errstate(over="raise"):
        try:
            powers = dets**p
            m = float(powers.mean())
        except FloatingPointError:
            raise OverflowError(f"determinant moment overflow at p = {p}")
    if not np.isfinite(m) or m <= 0.0:
        raise OverflowError(f"determinant moment overflow at p = {p}")
    return math.log(m) / abs(tau)
