import math

import numpy as np
import pytest

from ftdrlab import flows, tangent
from ftdrlab.flows import IntegratorConfig

RK4 = IntegratorConfig("rk4", 1e-2)
HEUN = IntegratorConfig("stratonovich_heun", 1e-2)


def saddle(lam=0.3):
    return flows.make_linear([[lam, 0.0], [0.0, -lam]])


def test_derivative_flow_saddle_closed_form():
    ts = tangent.derivative_flow(saddle(0.3), 0.0, 2.0, (0.1, 0.2), 0, RK4)
    expect = np.diag([math.exp(0.6), math.exp(-0.6)])
    assert np.allclose(ts.jacobian, expect, atol=1e-8)


def test_derivative_flow_rotation_orthogonal():
    spec = flows.make_rotation_2d(omega=1.0)
    ts = tangent.derivative_flow(spec, 0.0, 2.0, (1.0, 0.0), 0, RK4)
    sv = tangent.singular_values(ts.jacobian)
    assert np.allclose(sv, [1.0, 1.0], atol=1e-8)


def _fd_jacobian(spec, t0, tau, x, cfg, key=None, h=1e-5):
    cols = []
    for j in range(spec.dim):
        e = np.zeros(spec.dim)
        e[j] = h
        fp = flows.flow_map(spec, t0, tau, np.asarray(x) + e, key=key, cfg=cfg)
        fm = flows.flow_map(spec, t0, tau, np.asarray(x) - e, key=key, cfg=cfg)
        cols.append(spec.domain.minimal_image(fp - fm) / (2 * h))
    return np.stack(cols, axis=1)


def test_jacobian_vs_fd_deterministic_double_gyre():
    spec = flows.make_double_gyre()
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.uniform([0.1, 0.1], [1.9, 0.9])
        ts = tangent.derivative_flow(spec, 0.0, 2.0, x, 0, RK4)
        J_fd = _fd_jacobian(spec, 0.0, 2.0, x, RK4)
        rel = np.max(np.abs(ts.jacobian - J_fd)) / np.max(np.abs(J_fd))
        assert rel < 1e-4


def test_jacobian_vs_fd_stochastic_shared_noise():
    from ftdrlab.noise import NoiseKey
    spec = flows.make_double_gyre(sigma=(0.05, 0.05))
    cfg = IntegratorConfig("euler_maruyama", 1e-2)
    rng = np.random.default_rng(2)
    for i in range(10):
        x = rng.uniform([0.1, 0.1], [1.9, 0.9])
        key = NoiseKey(master_seed=33, box_index=i, realization_index=0)
        ts = tangent.derivative_flow(spec, 0.0, 2.0, x, 0, cfg,
                                     master_seed=33, box_index=i)
        J_fd = _fd_jacobian(spec, 0.0, 2.0, x, cfg, key=key)
        rel = np.max(np.abs(ts.jacobian - J_fd)) / np.max(np.abs(J_fd))
        assert rel < 1e-2


def test_incompressibility_tau8_100_points():
    spec = flows.make_double_gyre()
    rng = np.random.default_rng(7)
    X0 = rng.uniform([0.05, 0.05], [1.95, 0.95], size=(100, 2))
    _, Y = tangent.derivative_flow_batch(spec, 0.0, 8.0, X0, RK4)
    dets = np.linalg.det(Y)
    assert np.max(np.abs(dets - 1.0)) < 1e-3


def test_ftle_saddle_and_rotation():
    assert tangent.ftle_max(saddle(0.3), 0.0, 2.0, (0.0, 0.0), 0, RK4) == pytest.approx(0.3, abs=1e-8)
    assert tangent.ftle_min(saddle(0.3), 0.0, 2.0, (0.0, 0.0), 0, RK4) == pytest.approx(-0.3, abs=1e-8)
    rot = flows.make_rotation_2d(omega=1.0)
    assert abs(tangent.ftle_max(rot, 0.0, 2.0, (1.0, 0.0), 0, RK4)) < 1e-8
    ident = flows.make_linear([[0.0, 0.0], [0.0, 0.0]])
    assert tangent.ftle_min(ident, 0.0, 1.0, (0.0, 0.0), 0, RK4) == pytest.approx(0.0, abs=1e-12)


def test_ftle_1d_contraction_forward_backward():
    spec = flows.make_linear([[-1.0]])
    fwd = tangent.ftle_max(spec, 0.0, 1.0, (0.5,), 0, RK4)
    back = tangent.ftle_max(spec, 0.0, -1.0, (0.5,), 0, RK4)
    assert fwd == pytest.approx(-1.0, abs=1e-9)
    assert back == pytest.approx(1.0, abs=1e-9)


def test_min_r_identity_saddle():
    # largest backward FTLE at the image equals minus the minimal forward FTLE
    spec = saddle(0.4)
    x = np.array([0.3, -0.2])
    tau = 2.0
    img = flows.flow_map(spec, 0.0, tau, x, cfg=RK4)
    lam_back = tangent.ftle_max(spec, tau, -tau, img, 0, RK4)
    gam_fwd = tangent.ftle_min(spec, 0.0, tau, x, 0, RK4)
    assert abs(lam_back + gam_fwd) < 1e-6


def test_min_r_identity_double_gyre():
    spec = flows.make_double_gyre()
    cfg = IntegratorConfig("rk4", 2e-3)
    x = np.array([0.7, 0.35])
    tau = 2.0
    img = flows.flow_map(spec, 0.0, tau, x, cfg=cfg)
    lam_back = tangent.ftle_max(spec, tau, -tau, img, 0, cfg)
    gam_fwd = tangent.ftle_min(spec, 0.0, tau, x, 0, cfg)
    assert abs(lam_back + gam_fwd) < 1e-6


def test_ftle_stoch_avg_deterministic_degenerate():
    spec = saddle(0.3)
    mean, err = tangent.ftle_stoch_avg(spec, 0.0, 2.0, (0.0, 0.0),
                                       [[1.0, 0.0]], 4, RK4)
    assert err == pytest.approx(0.0, abs=1e-12)
    assert mean == pytest.approx(0.3, abs=1e-8)


def test_ftle_stoch_avg_geometric():
    # dy = a y dt + s y o dW: log |y_t/y| = a tau + s W_tau
    spec = flows.make_geometric_1d(0.3, 0.5)
    cfg = IntegratorConfig("stratonovich_heun", 2e-3)
    mean, err = tangent.ftle_stoch_avg(spec, 0.0, 1.0, (1.0,), [[1.0]],
                                       10_000, cfg, master_seed=9)
    assert err < 0.01
    assert abs(mean - 0.3) < 3 * err + 5e-3


def test_ftle_stoch_avg_angle_noise_rotation():
    spec = flows.make_rotation_2d(omega=1.0, angle_noise=0.7)
    cfg = IntegratorConfig("stratonovich_heun", 5e-3)
    mean, err = tangent.ftle_stoch_avg(spec, 0.0, 1.0, (1.0, 0.0),
                                       "uniform-sphere 4", 200, cfg,
                                       master_seed=17)
    # the Heun one-step map is orthogonal only to O(dt^2); allow that bias
    assert abs(mean) < 3 * err + 1e-3


def test_moment_exponent_deterministic_collapses():
    spec = saddle(0.3)
    for p in (-1.0, 0.5, 2.0):
        val, err = tangent.moment_exponent(spec, 0.0, 2.0, (0.0, 0.0),
                                           (1.0, 0.0), p, 3, RK4)
        assert err == pytest.approx(0.0, abs=1e-12)
        assert val == pytest.approx(p * 0.3, abs=1e-7)


def test_moment_exponent_lognormal_p2():
    # E(p) = p a + p^2 s^2 / 2 for the scalar Stratonovich geometric flow
    spec = flows.make_geometric_1d(0.0, 1.0)
    cfg = IntegratorConfig("stratonovich_heun", 5e-3)
    val, err = tangent.moment_exponent(spec, 0.0, 1.0, (1.0,), (1.0,), 2.0,
                                       100_000, cfg, master_seed=4)
    assert abs(val - 2.0) / 2.0 < 0.05


def test_moment_exponent_small_p_slope():
    spec = flows.make_geometric_1d(0.3, 0.5)
    cfg = IntegratorConfig("stratonovich_heun", 2e-3)
    for p in (0.01, -0.01):
        val, err = tangent.moment_exponent(spec, 0.0, 1.0, (1.0,), (1.0,), p,
                                           20_000, cfg, master_seed=8)
        # closed form: E(p)/p = a + p s^2/2
        expect = 0.3 + p * 0.25 / 2.0
        assert abs(val / p - expect) < 3 * err / abs(p) + 5e-3


def test_moment_exponent_convexity_and_monotonicity():
    spec = flows.make_geometric_1d(0.1, 0.6)
    cfg = IntegratorConfig("stratonovich_heun", 5e-3)
    grid = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0]
    vals = {}
    errs = {}
    for p in grid:
        v, e = tangent.moment_exponent(spec, 0.0, 1.0, (1.0,), (1.0,), p,
                                       40_000, cfg, master_seed=13)
        vals[p], errs[p] = v, e
    # midpoint convexity on pairs whose midpoint is in the grid
    for a, b in [(-2.0, 1.0), (-1.0, 2.0)]:
        mid = 0.5 * (a + b)
        slack = 3 * (errs[a] + errs[b] + errs[mid])
        assert vals[mid] <= 0.5 * (vals[a] + vals[b]) + slack
    # p -> E(p)/p nondecreasing
    ratios = [vals[p] / p for p in grid]
    slacks = [3 * errs[p] / abs(p) for p in grid]
    for i in range(len(grid) - 1):
        assert ratios[i] <= ratios[i + 1] + slacks[i] + slacks[i + 1]


def test_moment_overflow_reported():
    spec = flows.make_geometric_1d(0.0, 1.0)
    cfg = IntegratorConfig("stratonovich_heun", 1e-2)
    with pytest.raises(OverflowError):
        tangent.moment_exponent(spec, 0.0, 1.0, (1.0,), (1.0,), 400.0, 100, cfg)


def test_sum_exponents_examples():
    # incompressible: det = 1 identically
    val = tangent.sum_exponents_functional(saddle(0.3), 0.0, 2.0, (0.0, 0.0),
                                           2.0, 1, RK4)
    assert abs(val) < 1e-9
    # 1D expansion: J(p) = p lambda
    spec = flows.make_linear([[0.4]])
    val = tangent.sum_exponents_functional(spec, 0.0, 2.0, (1.0,), 3.0, 1, RK4)
    assert val == pytest.approx(1.2, abs=1e-8)


def test_sum_exponents_geometric_inequality():
    # d E[log J] = 0 <= J(x;1) = s^2/2
    spec = flows.make_geometric_1d(0.0, 1.0)
    cfg = IntegratorConfig("stratonovich_heun", 5e-3)
    val = tangent.sum_exponents_functional(spec, 0.0, 1.0, (1.0,), 1.0,
                                           50_000, cfg, master_seed=3)
    assert abs(val - 0.5) < 0.05


def test_ftle_norm_identity_supremum_over_directions():
    spec = flows.make_double_gyre()
    x = (0.6, 0.4)
    lam = tangent.ftle_max(spec, 0.0, 2.0, x, 0, RK4)
    from ftdrlab.noise import unit_directions
    dirs = unit_directions(123, 64, 2)
    best = -np.inf
    ts = tangent.derivative_flow(spec, 0.0, 2.0, x, 0, RK4)
    for u in dirs:
        best = max(best, math.log(np.linalg.norm(ts.jacobian @ u)) / 2.0)
    assert abs(lam - best) < 5e-2
    assert best <= lam + 1e-12


def test_degenerate_jacobian_detected():
    spec = flows.make_linear([[-400.0, 0.0], [0.0, -400.0]])
    with pytest.raises(tangent.DegenerateJacobianError):
        tangent.derivative_flow(spec, 0.0, 2.0, (0.0, 0.0), 0,
                                IntegratorConfig("rk4", 1e-3))
