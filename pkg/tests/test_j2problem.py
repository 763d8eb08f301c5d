"""Satellite-problem closed forms against independent oracles.

The spectral/quadrature oracle chain lives in aux_oracles; hand-expanded
component formulas for v and u are transcribed here and serve as pins
for both the closed forms in the package and the oracle chain itself.
"""

import math

import numpy as np
import pytest

import aux_oracles as ax
from polarj2 import j2problem, kepler, numerics

PI = math.pi


def _random_points(seed, n, with_theta=True):
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.8, 4.0, n)
    e = rng.uniform(0.1, 0.9, n)
    y = rng.uniform(-3.0, 3.0, n)
    if not with_theta:
        return p, e, y
    return p, e, y, rng.uniform(0.0, 2.0 * PI, n)


def _reference_v_p(p, e, y, theta):
    return (1.0 / (12.0 * PI * p)) * (
        16.0 * e * np.sin(y) - 18.0 * e * np.sin(theta + y)
        - 9.0 * np.sin(2.0 * theta) - 2.0 * e * np.sin(3.0 * theta - y))


def _reference_u_p(p, e, y, th):
    e2, e3 = e ** 2, e ** 3
    return (3.0 * PI / (128.0 * p ** 5)) * (
        -512.0 * e * np.sin(y) + 824.0 * e2 * np.sin(2.0 * y)
        - 103.0 * e3 * np.sin(th - 3.0 * y)
        + 64.0 * e2 * np.sin(th - 2.0 * y)
        - (1296.0 * e - 36.0 * e3) * np.sin(th - y)
        - (768.0 - 1152.0 * e2) * np.sin(th)
        + (3524.0 * e + 567.0 * e3) * np.sin(th + y)
        + 960.0 * e2 * np.sin(th + 2.0 * y)
        - 24.0 * e3 * np.sin(th + 3.0 * y)
        - 576.0 * e2 * np.sin(2.0 * th - 2.0 * y)
        + 2048.0 * e * np.sin(2.0 * th - y)
        + (4576.0 + 1992.0 * e2) * np.sin(2.0 * th)
        + 1024.0 * e * np.sin(2.0 * th + y)
        - 744.0 * e2 * np.sin(2.0 * th + 2.0 * y)
        + 36.0 * e3 * np.sin(3.0 * th - 3.0 * y)
        + 1216.0 * e2 * np.sin(3.0 * th - 2.0 * y)
        + (3180.0 * e + 521.0 * e3) * np.sin(3.0 * th - y)
        - (1792.0 - 640.0 * e2) * np.sin(3.0 * th)
        - (1264.0 * e + 172.0 * e3) * np.sin(3.0 * th + y)
        - 27.0 * e3 * np.sin(3.0 * th + 3.0 * y)
        + 560.0 * e2 * np.sin(4.0 * th - 2.0 * y)
        - 1536.0 * e * np.sin(4.0 * th - y)
        + (256.0 - 912.0 * e2) * np.sin(4.0 * th)
        - 336.0 * e2 * np.sin(4.0 * th + 2.0 * y)
        + 57.0 * e3 * np.sin(5.0 * th - 3.0 * y)
        - 320.0 * e2 * np.sin(5.0 * th - 2.0 * y)
        + (288.0 * e - 144.0 * e3) * np.sin(5.0 * th - y)
        - (900.0 * e + 115.0 * e3) * np.sin(5.0 * th + y)
        + 88.0 * e2 * np.sin(6.0 * th - 2.0 * y)
        - (672.0 + 696.0 * e2) * np.sin(6.0 * th)
        + 4.0 * e3 * np.sin(7.0 * th - 3.0 * y)
        - (812.0 * e + 133.0 * e3) * np.sin(7.0 * th - y)
        - 328.0 * e2 * np.sin(8.0 * th - 2.0 * y)
        - 45.0 * e3 * np.sin(9.0 * th - 3.0 * y))


def test_s_has_zero_mean():
    p, e, y = _random_points(8101, 20, with_theta=False)
    for k in range(len(p)):
        for c in range(3):
            mean = numerics.periodic_average(
                lambda th, c=c: j2problem.s_closed(p[k], e[k], y[k],
                                                   th)[..., c])
            assert abs(mean) < 1e-10


def test_s_derivative_recovers_field():
    # field = mean + 2 pi ds/dtheta, checked by central differences
    p, e, y, th = _random_points(8102, 400)
    h = 1e-6
    ds = (j2problem.s_closed(p, e, y, th + h)
          - j2problem.s_closed(p, e, y, th - h)) / (2.0 * h)
    lhs = 2.0 * PI * ds
    rhs = kepler.j2_field(p, e, y, th) - kepler.j2_mean_field(p)
    assert np.abs(lhs - rhs).max() < 1e-6


def test_s_matches_spectral_construction():
    p, e, y = _random_points(8103, 8, with_theta=False)
    thetas = np.linspace(0.0, 2.0 * PI, 41)
    for k in range(len(p)):
        i = np.array([p[k], e[k], y[k]])
        spectral = ax.s_fun(i)(thetas)
        closed = j2problem.s_closed(p[k], e[k], y[k], thetas)
        assert np.abs(spectral - closed).max() < 1e-8


def test_v_component_matches_reference_form():
    i = np.array([2.3, 0.41, 0.7])
    thetas = np.linspace(0.0, 2.0 * PI, 101)
    v = ax.v_fun(i)(thetas)
    assert np.abs(v[:, 0] - _reference_v_p(*i, thetas)).max() < 1e-10


def test_u_component_matches_reference_form():
    i = np.array([2.3, 0.41, 0.7])
    thetas = np.linspace(0.1, 6.2, 57)
    u = ax.u_fun(i)(thetas)
    # u is built with one finite-difference layer, hence the tolerance
    assert np.abs(u[:, 0] - _reference_u_p(*i, thetas)).max() < 5e-7


def test_pbar_matches_spectral_mean():
    p, e, y = _random_points(8104, 10, with_theta=False)
    for k in range(len(p)):
        i = np.array([p[k], e[k], y[k]])
        assert np.abs(j2problem.pbar(*i) - ax.pbar(i)).max() < 1e-7


def test_mean_field_jacobian_and_hessian():
    p, e, y = _random_points(8105, 5, with_theta=False)
    for k in range(len(p)):
        i = np.array([p[k], e[k], y[k]])
        assert np.abs(j2problem.jac_fbar(*i) - ax.jac_fbar_fd(i)).max() < 1e-8
        assert np.abs(j2problem.hess_fbar(*i)
                      - ax.hess_fbar_fd(i)).max() < 1e-3
        # the slow-curvature combination hess*fbar - jac^2 vanishes
        # identically for this field
        jac = j2problem.jac_fbar(*i)
        fbar = kepler.j2_mean_field(p[k])
        combo = (np.einsum("ijk,k->ij", j2problem.hess_fbar(*i), fbar)
                 - jac @ jac)
        assert np.abs(combo).max() == 0.0
        assert np.abs(ax.m_tensor(i)).max() < 1e-3


def test_pbar_jacobian_against_complex_step():
    p, e, y = _random_points(8106, 20, with_theta=False)
    for k in range(len(p)):
        i = np.array([p[k], e[k], y[k]])
        cs = ax.pbar_jac_cs(j2problem.pbar, i)
        closed = j2problem.dpbar_di(*i)
        assert np.abs(closed - cs).max() < 1e-12 * max(
            1.0, np.abs(cs).max())


def test_pbar_jac_hess_bundle():
    vals = j2problem.pbar_jac_hess(2.3, 0.41, 0.7)
    assert np.array_equal(vals[0], j2problem.pbar(2.3, 0.41, 0.7))
    assert np.array_equal(vals[1], j2problem.jac_fbar(2.3, 0.41, 0.7))
    assert np.array_equal(vals[2], j2problem.hess_fbar(2.3, 0.41, 0.7))


def test_closed_r_k_structure():
    config = j2problem.J2Config(p0=3.0, e0=0.664, y0=0.2, epsilon=5.457e-4,
                                u=1.6)
    r0, rinv0, k0 = j2problem.closed_R_K(config, 0.0)
    assert np.array_equal(r0, np.eye(3))
    assert np.abs(k0).max() < 1e-15
    for tau in (0.3, 0.9, 1.6):
        r, rinv, k = j2problem.closed_R_K(config, tau)
        assert np.abs(r @ rinv - np.eye(3)).max() < 1e-14
        # K satisfies dK/dtau = jac K + pbar(J(tau)), checked by
        # differencing the closed form
        h = 1e-6
        dk = (j2problem.closed_R_K(config, tau + h)[2]
              - j2problem.closed_R_K(config, tau - h)[2]) / (2.0 * h)
        jac = j2problem.jac_fbar(config.p0, config.e0, config.y0)
        j_tau = np.array([config.p0, config.e0,
                          config.y0 - 3.0 * PI * tau / config.p0 ** 2])
        resid = dk - (jac @ k + j2problem.pbar(*j_tau))
        assert np.abs(resid).max() < 1e-7


@pytest.mark.parametrize("preset", [
    dict(p0=3.000, e0=0.6640, y0=0.0), dict(p0=1.973, e0=0.8817, y0=0.96)])
def test_q_matrix_identity(preset):
    # the second-order inverse coefficient must equal z + m^2, with z
    # rebuilt here by one-sided Richardson differences of the b table
    config = j2problem.J2Config(epsilon=5.457e-4, u=1.0, **preset)
    table = j2problem.bounds(config)
    inv = j2problem.inverse_matrices(config)
    coef = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0

    def z_fd(h):
        out = np.empty((3, 3))
        for j in range(3):
            cols = []
            for k in range(5):
                r = np.zeros(3)
                r[j] = k * h
                cols.append(np.asarray(table.b_vec(r)))
            out[:, j] = sum(c * v for c, v in zip(coef, cols)) / h
        return out

    z = (16.0 * z_fd(5e-4) - z_fd(1e-3)) / 15.0
    m = np.asarray(table.a_matrix(np.zeros(3)))
    q_oracle = z + m @ m
    rel = np.abs(inv.q - q_oracle) / np.maximum(np.abs(inv.q), 1e-30)
    assert rel.max() < 1e-9
    # and against the closed-form partials of b
    z_closed = np.asarray(table.db_dr(np.zeros(3)))
    rel2 = np.abs(inv.q - (z_closed + m @ m)) \
        / np.maximum(np.abs(inv.q), 1e-30)
    assert rel2.max() < 1e-12


@pytest.mark.parametrize("preset", [
    dict(p0=3.000, e0=0.6640, y0=0.0), dict(p0=1.973, e0=0.8817, y0=0.96)])
def test_approximate_inverse_third_order(preset):
    # with the physical scaling r = eps * n the defect against the
    # exact inverse is cubic in eps: halving eps divides it by ~8
    n0 = np.array([2.9, 1.4, 0.93])
    res = []
    for eps in (1e-3, 5e-4, 2.5e-4):
        config = j2problem.J2Config(epsilon=eps, u=1.0, **preset)
        r = eps * n0
        defect = np.abs(j2problem.approx_inverse(config, r)
                        - j2problem.exact_inverse(config, r)).max()
        res.append(defect)
    assert 6.0 < res[0] / res[1] < 10.0
    assert 6.0 < res[1] / res[2] < 10.0


def test_exact_inverse_against_linalg():
    config = j2problem.J2Config(p0=3.0, e0=0.664, y0=0.0, epsilon=5.457e-4,
                                u=1.0)
    rng = np.random.default_rng(8107)
    for _ in range(50):
        r = rng.uniform(0.0, 0.2, 3)
        mat = np.eye(3) - config.epsilon * j2problem.alpha_partials(config, r)
        want = np.linalg.inv(mat)
        got = j2problem.exact_inverse(config, r)
        assert np.abs(got - want).max() < 1e-10


def test_alpha_partials_match_finite_differences():
    config = j2problem.J2Config(p0=3.0, e0=0.664, y0=0.0, epsilon=5.457e-4,
                                u=1.0)
    table = j2problem.bounds(config)
    r0 = np.array([0.3, 0.05, 0.4])
    h = 1e-6

    def alpha_bound_part(r):
        return np.asarray(table.a_matrix(r)) @ r \
            + config.epsilon * np.asarray(table.b_vec(r))

    fd = np.empty((3, 3))
    for j in range(3):
        hi, lo = r0.copy(), r0.copy()
        hi[j] += h
        lo[j] -= h
        fd[:, j] = (alpha_bound_part(hi) - alpha_bound_part(lo)) / (2.0 * h)
    closed = np.asarray(j2problem.alpha_partials(config, r0))
    assert np.abs(closed - fd).max() < 1e-5 * max(1.0, np.abs(fd).max())


def test_bound_tables_nondecreasing_in_r():
    table = j2problem.BoundTable(3.0, 0.664, 5.457e-4)
    rng = np.random.default_rng(8108)
    for _ in range(200):
        r1 = rng.uniform(0.0, 1.0, 3) * np.array([2.0, 0.25, 3.0])
        r2 = r1 + rng.uniform(0.0, 1.0, 3) * (
            np.array([2.9, 0.33, 5.0]) - r1)
        for name in ("a_matrix", "b_vec", "c_vec", "d_matrix", "e_tensor"):
            low = np.asarray(getattr(table, name)(r1))
            high = np.asarray(getattr(table, name)(r2))
            assert np.all(low >= 0.0)
            assert np.all(high >= low - 1e-12)


def test_bound_table_partials_match_finite_differences():
    table = j2problem.BoundTable(3.0, 0.664, 5.457e-4)
    r0 = np.array([0.4, 0.08, 1.1])
    h = 1e-6
    fd_a = np.empty((3, 3, 3))
    fd_b = np.empty((3, 3))
    for j in range(3):
        hi, lo = r0.copy(), r0.copy()
        hi[j] += h
        lo[j] -= h
        fd_a[..., j] = (np.asarray(table.a_matrix(hi))
                        - np.asarray(table.a_matrix(lo))) / (2.0 * h)
        fd_b[..., j] = (np.asarray(table.b_vec(hi))
                        - np.asarray(table.b_vec(lo))) / (2.0 * h)
    assert np.abs(np.asarray(table.da_dr(r0)) - fd_a).max() < 1e-5
    assert np.abs(np.asarray(table.db_dr(r0)) - fd_b).max() \
        < 1e-5 * max(1.0, np.abs(fd_b).max())


def test_bound_table_broadcasts_over_samples():
    table = j2problem.BoundTable(3.0, 0.664, 5.457e-4)
    r = np.array([[0.0, 0.0, 0.0], [0.5, 0.1, 2.0]])
    assert np.asarray(table.a_matrix(r)).shape == (2, 3, 3)
    assert np.asarray(table.b_vec(r)).shape == (2, 3)
    assert np.asarray(table.e_tensor(r)).shape == (2, 3, 3, 3)


def test_cap_violations():
    table = j2problem.BoundTable(3.0, 0.664, 5.457e-4)
    with pytest.raises(j2problem.CapViolation):
        table.a_matrix([-0.1, 0.0, 0.0])
    with pytest.raises(j2problem.CapViolation):
        table.a_matrix([3.0, 0.0, 0.0])
    with pytest.raises(j2problem.CapViolation):
        table.b_vec([0.0, 0.34, 0.0])
    with pytest.raises(j2problem.CapViolation):
        j2problem.s_closed(3.0, 0.0, 0.0, 1.0)


def test_caps_of_config():
    config = j2problem.J2Config(p0=3.0, e0=0.664, y0=0.0, epsilon=5.457e-4,
                                u=1.0)
    cap_fn = j2problem.caps(config)
    vals = cap_fn(0.7)
    assert vals[0] == 3.0
    assert vals[1] == pytest.approx(0.336)
    assert math.isinf(vals[2])


def test_config_orbit_accounting():
    config = j2problem.J2Config.from_orbits(p0=3.0, e0=0.664, y0=0.0,
                                            epsilon=5.457e-4, orbits=3000.0)
    assert config.u == pytest.approx(5.457e-4 * 3000.0)
    assert config.orbits == pytest.approx(3000.0)
    assert np.array_equal(config.i0, [3.0, 0.664, 0.0])
    longer = config.with_orbits(60000.0)
    assert longer.orbits == pytest.approx(60000.0)
    assert longer.p0 == config.p0


def test_config_validation():
    good = dict(p0=3.0, e0=0.664, y0=0.0, epsilon=5.457e-4, u=1.0)
    for bad in (dict(p0=-1.0), dict(e0=0.0), dict(e0=1.0),
                dict(epsilon=0.0), dict(u=0.0), dict(tau_grid=1),
                dict(theta_grid=0), dict(inverse_mode="newton"),
                dict(interp_mode="quintic")):
        with pytest.raises(ValueError):
            j2problem.J2Config(**{**good, **bad})
