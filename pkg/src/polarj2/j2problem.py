"""Closed forms and bound tables for the polar J2 averaging problem.

The slow state is I = (p, e, y) driven once per orbit by the J2 field
(kepler.j2_field); its average is (0, 0, -3*pi/p^2), so the averaged
solution keeps p and e frozen while y drifts linearly.  Everything the
envelope estimator needs is available in closed form here: the
oscillation primitive s, the averaged quadratic form pbar with its
derivatives, the fundamental/particular solutions, the majorizing bound
tables on boxes around the initial condition, their analytic r-partials
and the third-order approximate inverse of (1 - eps d(alpha)/dr).
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import averaging, kepler

__all__ = [
    "CapViolation",
    "J2Config",
    "CapFunctions",
    "BoundTable",
    "InverseMatrices",
    "s_closed",
    "pbar",
    "jac_fbar",
    "hess_fbar",
    "pbar_jac_hess",
    "dpbar_di",
    "closed_R_K",
    "bounds",
    "caps",
    "alpha_partials",
    "inverse_matrices",
    "approx_inverse",
    "exact_inverse",
    "make_system",
]

PI = math.pi
TWO_PI = 2.0 * math.pi


class CapViolation(ValueError):
    """Bound table evaluated outside its validity box."""


@dataclass(frozen=True)
class J2Config:
    """Run configuration: initial elements, strength, horizon, knobs.

    u is the slow-time horizon; u/epsilon is the orbit count.  Separate
    integration tolerances apply to the envelope estimator ODE and to
    the direct validation integration (the latter runs in fast time and
    needs the tighter default).

    interp_mode picks how the tabulated base envelope is turned into a
    smooth function.  The default is the piecewise cubic spline; the
    global interpolating polynomial ("lagrange") oscillates between
    nodes once tau_grid grows past a few tens, so it is only usable on
    coarse grids.
    """

    p0: float
    e0: float
    y0: float
    epsilon: float
    u: float
    theta_grid: int = 30
    tau_grid: int = 100
    est_abs_tol: float = 1e-8
    est_rel_tol: float = 1e-8
    l_abs_tol: float = 1e-10
    l_rel_tol: float = 1e-10
    l_max_steps: int = 20_000_000
    inverse_mode: str = "approx"
    interp_mode: str = "cubic"
    sample_count: int = 512

    def __post_init__(self):
        if self.p0 <= 0.0:
            raise ValueError("p0 must be positive")
        if not 0.0 < self.e0 < 1.0:
            raise ValueError("e0 must lie strictly between 0 and 1")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.u <= 0.0:
            raise ValueError("u must be positive")
        if self.theta_grid < 1 or self.tau_grid < 2:
            raise ValueError("grid sizes too small")
        if self.inverse_mode not in ("approx", "exact"):
            raise ValueError("inverse_mode must be 'approx' or 'exact'")
        if self.interp_mode not in ("lagrange", "cubic"):
            raise ValueError("interp_mode must be 'lagrange' or 'cubic'")

    @classmethod
    def from_orbits(cls, p0, e0, y0, epsilon, orbits, **kw):
        return cls(p0=p0, e0=e0, y0=y0, epsilon=epsilon,
                   u=epsilon * orbits, **kw)

    @property
    def orbits(self):
        return self.u / self.epsilon

    def with_orbits(self, orbits):
        return replace(self, u=self.epsilon * orbits)

    @property
    def i0(self):
        return np.array([self.p0, self.e0, self.y0])


@dataclass(frozen=True)
class CapFunctions:
    """Validity radii rho(tau) around the averaged solution.

    For this problem they are tau-independent: rho_p = p0 (p stays
    positive), rho_e = min(e0, 1 - e0) (e stays inside (0, 1)), and the
    y direction is unconstrained.
    """

    rho_p: float
    rho_e: float
    rho_y: float = np.inf

    def __call__(self, tau):
        return np.array([self.rho_p, self.rho_e, self.rho_y])


def caps(config):
    return CapFunctions(rho_p=config.p0,
                        rho_e=min(config.e0, 1.0 - config.e0))


def s_closed(p, e, y, theta):
    """Oscillation primitive of the J2 field.

    Zero-mean in theta and satisfying field = mean + 2*pi ds/dtheta.
    Broadcasts and preserves complex input; the last axis of the
    result indexes (p, e, y).
    """
    p = np.asarray(p)
    e = np.asarray(e)
    y = np.asarray(y)
    theta = np.asarray(theta)
    if np.any(e == 0.0):
        raise CapViolation("e = 0 is outside the element chart")
    e2 = e * e
    s_p = -(1.0 / p) * (3.0 * e * np.cos(theta + y)
                        + 3.0 * np.cos(2.0 * theta)
                        + e * np.cos(3.0 * theta - y))
    s_e = -(1.0 / (16.0 * p ** 2)) * (
        3.0 * e2 * np.cos(theta - 3.0 * y)
        + (24.0 + 6.0 * e2) * np.cos(theta - y)
        + (12.0 + 33.0 * e2) * np.cos(theta + y)
        + 12.0 * e * np.cos(2.0 * theta - 2.0 * y)
        + 60.0 * e * np.cos(2.0 * theta)
        + 2.0 * e2 * np.cos(3.0 * theta - 3.0 * y)
        + (28.0 + 17.0 * e2) * np.cos(3.0 * theta - y)
        + 18.0 * e * np.cos(4.0 * theta - 2.0 * y)
        + 3.0 * e2 * np.cos(5.0 * theta - 3.0 * y))
    s_y = -(1.0 / (16.0 * p ** 2 * e)) * (
        3.0 * e2 * np.sin(theta - 3.0 * y)
        + (24.0 + 18.0 * e2) * np.sin(theta - y)
        - (12.0 - 21.0 * e2) * np.sin(theta + y)
        + 12.0 * e * np.sin(2.0 * theta - 2.0 * y)
        + 36.0 * e * np.sin(2.0 * theta)
        + 2.0 * e2 * np.sin(3.0 * theta - 3.0 * y)
        + (28.0 + 11.0 * e2) * np.sin(3.0 * theta - y)
        + 18.0 * e * np.sin(4.0 * theta - 2.0 * y)
        + 3.0 * e2 * np.sin(5.0 * theta - 3.0 * y))
    return np.stack(np.broadcast_arrays(s_p, s_e, s_y), axis=-1)


def pbar(p, e, y):
    """Angle average of (ds/dI) * field."""
    s2y = np.sin(2.0 * y)
    c2y = np.cos(2.0 * y)
    return np.array([
        -(3.0 * PI * e ** 2 / (2.0 * p ** 3)) * s2y,
        (3.0 * PI / (4.0 * p ** 4)) * (10.0 * e - e ** 3) * s2y,
        (3.0 * PI / (16.0 * p ** 4)) * (34.0 + 25.0 * e ** 2
                                        + (40.0 + 10.0 * e ** 2) * c2y),
    ])


def jac_fbar(p, e, y):
    """Jacobian of the mean field: single (y, p) entry 6*pi/p^3."""
    jac = np.zeros((3, 3))
    jac[2, 0] = 6.0 * PI / p ** 3
    return jac


def hess_fbar(p, e, y):
    """Hessian tensor of the mean field: only d2(fbar_y)/dp2 != 0."""
    hess = np.zeros((3, 3, 3))
    hess[2, 0, 0] = -18.0 * PI / p ** 4
    return hess


def pbar_jac_hess(p, e, y):
    return pbar(p, e, y), jac_fbar(p, e, y), hess_fbar(p, e, y)


def dpbar_di(p, e, y):
    """Analytic Jacobian of pbar (rows: component, columns: d/dp,de,dy)."""
    s2y = math.sin(2.0 * y)
    c2y = math.cos(2.0 * y)
    return np.array([
        [(9.0 * PI * e ** 2 / (2.0 * p ** 4)) * s2y,
         -(3.0 * PI * e / p ** 3) * s2y,
         -(3.0 * PI * e ** 2 / p ** 3) * c2y],
        [-(3.0 * PI / p ** 5) * (10.0 * e - e ** 3) * s2y,
         (3.0 * PI / (4.0 * p ** 4)) * (10.0 - 3.0 * e ** 2) * s2y,
         (3.0 * PI / (2.0 * p ** 4)) * (10.0 * e - e ** 3) * c2y],
        [-(3.0 * PI / (4.0 * p ** 5)) * (34.0 + 25.0 * e ** 2
                                         + (40.0 + 10.0 * e ** 2) * c2y),
         (3.0 * PI / (16.0 * p ** 4)) * (50.0 * e + 20.0 * e * c2y),
         -(3.0 * PI / (8.0 * p ** 4)) * (40.0 + 10.0 * e ** 2) * s2y],
    ])


def closed_R_K(config, tau):
    """Closed fundamental matrix, its inverse, and the particular K."""
    p0, e0, y0 = config.p0, config.e0, config.y0
    slope = 6.0 * PI * tau / p0 ** 3
    r = np.eye(3)
    r[2, 0] = slope
    rinv = np.eye(3)
    rinv[2, 0] = -slope
    phase = 2.0 * y0 - 6.0 * PI * tau / p0 ** 2
    k_p = (e0 ** 2 / (4.0 * p0)) * (math.cos(2.0 * y0) - math.cos(phase))
    k_e = -((10.0 * e0 - e0 ** 3) / (8.0 * p0 ** 2)) * (
        math.cos(2.0 * y0) - math.cos(phase))
    k_y = ((3.0 * PI / (16.0 * p0 ** 4))
           * (34.0 + 25.0 * e0 ** 2 + 8.0 * e0 ** 2 * math.cos(2.0 * y0))
           * tau
           + ((20.0 + e0 ** 2) / (16.0 * p0 ** 2))
           * (math.sin(2.0 * y0) - math.sin(phase)))
    return r, rinv, np.array([k_p, k_e, k_y])


class BoundTable:
    """Majorant tables on the box p in [p0-rp, p0+rp], e in [e0-re, e0+re].

    All entries are rational in p_minus = p0 - rp, p_plus = p0 + rp,
    e_plus = e0 + re, e_minus = e0 - re, hence nonnegative and
    nondecreasing in r on the validity box rp < p0, re < min(e0, 1-e0).
    r never enters through its y component.  Evaluations broadcast over
    a leading sample axis when r has shape (..., 3).
    """

    def __init__(self, p0, e0, epsilon):
        self.p0 = float(p0)
        self.e0 = float(e0)
        self.epsilon = float(epsilon)
        self.cap_p = self.p0
        self.cap_e = min(self.e0, 1.0 - self.e0)

    def _split(self, r):
        r = np.asarray(r, dtype=float)
        rp = r[..., 0]
        re = r[..., 1]
        if np.any(rp < 0.0) or np.any(re < 0.0) or np.any(r[..., 2] < 0.0):
            raise CapViolation("bound tables need componentwise r >= 0")
        if np.any(rp >= self.cap_p) or np.any(re >= self.cap_e):
            raise CapViolation("r outside the validity box")
        m = self.p0 - rp   # p_minus
        pp = self.p0 + rp  # p_plus
        u = self.e0 + re   # e_plus
        w = self.e0 - re   # e_minus
        return m, pp, u, w

    def a_matrix(self, r):
        m, pp, u, w = self._split(r)
        rows = [
            [(3.0 + 4.0 * u) / m ** 2, 4.0 / m, 4.0 * u / m],
            [(32.0 + 45.0 * u + 32.0 * u ** 2) / (4.0 * m ** 3),
             (45.0 + 64.0 * u) / (8.0 * m ** 2),
             (16.0 + 15.0 * u + 20.0 * u ** 2) / (4.0 * m ** 2)],
            [(32.0 + 33.0 * u + 29.0 * u ** 2) / (4.0 * m ** 3 * w),
             (32.0 + 29.0 * u ** 2) / (8.0 * m ** 2 * w ** 2),
             (32.0 + 30.0 * u + 37.0 * u ** 2) / (8.0 * m ** 2 * w)],
        ]
        return _stack_matrix(rows)

    def b_vec(self, r):
        m, pp, u, w = self._split(r)
        b_p = (54.0 + 112.0 * u + 33.0 * u ** 2) / (8.0 * m ** 3)
        b_e = (6112.0 + 10832.0 * u + 6940.0 * u ** 2 + 11372.0 * u ** 3
               + 1441.0 * u ** 4) / (512.0 * m ** 4 * w)
        p03 = self.p0 ** 3
        b_y = (p03 * (3520.0 + 16384.0 * u + 9340.0 * u ** 2
                      + 8940.0 * u ** 3 + 1861.0 * u ** 4)
               + (1152.0 * u ** 2 + 4608.0 * u ** 3) * pp ** 3) \
            / (256.0 * p03 * w ** 2 * m ** 4)
        return _stack_vector([b_p, b_e, b_y])

    def c_vec(self, r):
        m, pp, u, w = self._split(r)
        c_p = 3.0 * PI * (504.0 + 1024.0 * u + 713.0 * u ** 2
                          + 124.0 * u ** 3) / (8.0 * m ** 5)
        c_e = (3.0 * PI / 2048.0) * (
            148736.0 + 738384.0 * u + 1062656.0 * u ** 2
            + 1220344.0 * u ** 3 + 675146.0 * u ** 4 + 336591.0 * u ** 5
            + 26855.0 * u ** 6) / (m ** 6 * w ** 2)
        p03 = self.p0 ** 3
        c_y = PI * (p03 * (370944.0 + 2214336.0 * u + 5434752.0 * u ** 2
                           + 4927104.0 * u ** 3 + 2945040.0 * u ** 4
                           + 1225668.0 * u ** 5 + 147777.0 * u ** 6)
                    + pp ** 3 * (231936.0 * u ** 3 + 442368.0 * u ** 4
                                 + 196608.0 * u ** 5)) \
            / (1024.0 * p03 * w ** 3 * m ** 6)
        return _stack_vector([c_p, c_e, c_y])

    def d_matrix(self, r):
        m, pp, u, w = self._split(r)
        rows = [
            [9.0 * PI * u ** 2 / (2.0 * m ** 4),
             3.0 * PI * u / m ** 3,
             3.0 * PI * u ** 2 / m ** 3],
            [3.0 * PI * u * (10.0 + u ** 2) / m ** 5,
             3.0 * PI * (10.0 + 3.0 * u ** 2) / (4.0 * m ** 4),
             3.0 * PI * u * (10.0 + u ** 2) / (2.0 * m ** 4)],
            [3.0 * PI * (74.0 + 35.0 * u ** 2) / (4.0 * m ** 5),
             105.0 * PI * u / (8.0 * m ** 4),
             15.0 * PI * (4.0 + u ** 2) / (4.0 * m ** 4)],
        ]
        return _stack_matrix(rows)

    def e_tensor(self, r):
        m, pp, u, w = self._split(r)
        entry = 18.0 * PI / m ** 4
        entry = np.asarray(entry, dtype=float)
        out = np.zeros(entry.shape + (3, 3, 3))
        out[..., 2, 0, 0] = entry
        return out

    def da_dr(self, r):
        """Partials d a_ij / d r_k as a (..., 3, 3, 3) tensor (k last)."""
        m, pp, u, w = self._split(r)
        zero = np.zeros_like(np.asarray(m, dtype=float))
        # d/d rp
        dp = [
            [2.0 * (3.0 + 4.0 * u) / m ** 3, 4.0 / m ** 2, 4.0 * u / m ** 2],
            [3.0 * (32.0 + 45.0 * u + 32.0 * u ** 2) / (4.0 * m ** 4),
             (45.0 + 64.0 * u) / (4.0 * m ** 3),
             (16.0 + 15.0 * u + 20.0 * u ** 2) / (2.0 * m ** 3)],
            [3.0 * (32.0 + 33.0 * u + 29.0 * u ** 2) / (4.0 * m ** 4 * w),
             (32.0 + 29.0 * u ** 2) / (4.0 * m ** 3 * w ** 2),
             (32.0 + 30.0 * u + 37.0 * u ** 2) / (4.0 * m ** 3 * w)],
        ]
        # d/d re
        de = [
            [4.0 / m ** 2, zero, 4.0 / m],
            [(45.0 + 64.0 * u) / (4.0 * m ** 3), 8.0 / m ** 2,
             (15.0 + 40.0 * u) / (4.0 * m ** 2)],
            [(33.0 + 58.0 * u) / (4.0 * m ** 3 * w)
             + (32.0 + 33.0 * u + 29.0 * u ** 2) / (4.0 * m ** 3 * w ** 2),
             29.0 * u / (4.0 * m ** 2 * w ** 2)
             + (32.0 + 29.0 * u ** 2) / (4.0 * m ** 2 * w ** 3),
             (30.0 + 74.0 * u) / (8.0 * m ** 2 * w)
             + (32.0 + 30.0 * u + 37.0 * u ** 2) / (8.0 * m ** 2 * w ** 2)],
        ]
        out = np.zeros(np.asarray(m, dtype=float).shape + (3, 3, 3))
        for i in range(3):
            for j in range(3):
                out[..., i, j, 0] = dp[i][j]
                out[..., i, j, 1] = de[i][j]
        return out

    def db_dr(self, r):
        """Partials d b_i / d r_k as a (..., 3, 3) array (k last)."""
        m, pp, u, w = self._split(r)
        p03 = self.p0 ** 3
        poly = (3520.0 + 16384.0 * u + 9340.0 * u ** 2 + 8940.0 * u ** 3
                + 1861.0 * u ** 4)
        tail = 1152.0 * u ** 2 + 4608.0 * u ** 3
        b_y_num = p03 * poly + tail * pp ** 3
        db_p_dp = 3.0 * (54.0 + 112.0 * u + 33.0 * u ** 2) / (8.0 * m ** 4)
        db_p_de = (112.0 + 66.0 * u) / (8.0 * m ** 3)
        poly_e = (6112.0 + 10832.0 * u + 6940.0 * u ** 2 + 11372.0 * u ** 3
                  + 1441.0 * u ** 4)
        db_e_dp = poly_e / (128.0 * m ** 5 * w)
        db_e_de = ((10832.0 + 13880.0 * u + 34116.0 * u ** 2
                    + 5764.0 * u ** 3) / (512.0 * m ** 4 * w)
                   + poly_e / (512.0 * m ** 4 * w ** 2))
        db_y_dp = (3.0 * tail * pp ** 2 / (256.0 * p03 * w ** 2 * m ** 4)
                   + 4.0 * b_y_num / (256.0 * p03 * w ** 2 * m ** 5))
        db_y_de = ((p03 * (16384.0 + 18680.0 * u + 26820.0 * u ** 2
                           + 7444.0 * u ** 3)
                    + (2304.0 * u + 13824.0 * u ** 2) * pp ** 3)
                   / (256.0 * p03 * w ** 2 * m ** 4)
                   + 2.0 * b_y_num / (256.0 * p03 * w ** 3 * m ** 4))
        zero = np.zeros_like(np.asarray(m, dtype=float))
        rows = [[db_p_dp, db_p_de, zero],
                [db_e_dp, db_e_de, zero],
                [db_y_dp, db_y_de, zero]]
        return _stack_matrix(rows)

    def dalpha_dr(self, r):
        """Raw partials d alpha_i / d r_j = (d a_ik/d r_j) r_k + a_ij
        + eps * d b_i/d r_j."""
        r = np.asarray(r, dtype=float)
        da = self.da_dr(r)
        term = np.einsum("...ikj,...k->...ij", da, r)
        return (term + self.a_matrix(r) + self.epsilon * self.db_dr(r))


def _stack_vector(entries):
    entries = [np.asarray(v, dtype=float) for v in entries]
    out = np.stack(np.broadcast_arrays(*entries), axis=-1)
    return out


def _stack_matrix(rows):
    flat = [np.asarray(v, dtype=float) for row in rows for v in row]
    flat = np.broadcast_arrays(*flat)
    stacked = np.stack(flat, axis=-1)
    return stacked.reshape(stacked.shape[:-1] + (3, 3))


def bounds(config):
    return BoundTable(config.p0, config.e0, config.epsilon)


def alpha_partials(config, r):
    """d alpha / d r at the configured initial condition."""
    return bounds(config).dalpha_dr(r)


@dataclass(frozen=True)
class InverseMatrices:
    """Coefficient matrices of the third-order approximate inverse.

    (1 - eps d(alpha)/dr)^(-1) ~ 1 + eps*m + eps*(r_p n_p + r_e n_e +
    r_y n_y) + eps^2 * q, with m = d(alpha)/dr at r=0 up to the eps*b
    term, n_k the symmetrized second-order coefficients and q = z + m^2
    where z = d b/d r at 0.
    """

    m: np.ndarray
    n_p: np.ndarray
    n_e: np.ndarray
    n_y: np.ndarray
    q: np.ndarray

    def combine(self, eps, r):
        r = np.asarray(r, dtype=float)
        return (np.eye(3) + eps * self.m
                + eps * (r[0] * self.n_p + r[1] * self.n_e + r[2] * self.n_y)
                + eps ** 2 * self.q)


def inverse_matrices(config):
    """Closed-form coefficient matrices at (p0, e0)."""
    p, e = config.p0, config.e0
    m = np.array([
        [(3.0 + 4.0 * e) / p ** 2, 4.0 / p, 4.0 * e / p],
        [(32.0 + 45.0 * e + 32.0 * e ** 2) / (4.0 * p ** 3),
         (45.0 + 64.0 * e) / (8.0 * p ** 2),
         (16.0 + 15.0 * e + 20.0 * e ** 2) / (4.0 * p ** 2)],
        [(32.0 + 33.0 * e + 29.0 * e ** 2) / (4.0 * e * p ** 3),
         (32.0 + 29.0 * e ** 2) / (8.0 * e ** 2 * p ** 2),
         (32.0 + 30.0 * e + 37.0 * e ** 2) / (8.0 * e * p ** 2)],
    ])
    n_p = np.array([
        [4.0 * (3.0 + 4.0 * e) / p ** 3, 8.0 / p ** 2, 4.0 * e / p ** 2],
        [3.0 * (32.0 + 45.0 * e + 32.0 * e ** 2) / (2.0 * p ** 4),
         (45.0 + 64.0 * e) / (2.0 * p ** 3),
         (16.0 + 15.0 * e + 20.0 * e ** 2) / (2.0 * p ** 3)],
        [3.0 * (32.0 + 33.0 * e + 29.0 * e ** 2) / (2.0 * e * p ** 4),
         (32.0 + 33.0 * e + 58.0 * e ** 2) / (2.0 * e ** 2 * p ** 3),
         (32.0 + 30.0 * e + 37.0 * e ** 2) / (4.0 * e * p ** 3)],
    ])
    n_e = np.array([
        [8.0 / p ** 2, 0.0, 4.0 / p],
        [(45.0 + 64.0 * e) / (2.0 * p ** 3), 16.0 / p ** 2,
         5.0 * (3.0 + 8.0 * e) / (4.0 * p ** 2)],
        [(32.0 + 33.0 * e + 58.0 * e ** 2) / (2.0 * e ** 2 * p ** 3),
         (16.0 + 29.0 * e ** 2) / (e ** 3 * p ** 2),
         (32.0 + 60.0 * e + 111.0 * e ** 2) / (8.0 * e ** 2 * p ** 2)],
    ])
    n_y = np.array([
        [4.0 * e / p ** 2, 4.0 / p, 0.0],
        [(16.0 + 15.0 * e + 20.0 * e ** 2) / (2.0 * p ** 3),
         5.0 * (3.0 + 8.0 * e) / (4.0 * p ** 2), 0.0],
        [(32.0 + 30.0 * e + 37.0 * e ** 2) / (4.0 * e * p ** 3),
         (32.0 + 60.0 * e + 111.0 * e ** 2) / (8.0 * e ** 2 * p ** 2), 0.0],
    ])
    q_ep = (10208.0 + 27728.0 * e + 44440.0 * e ** 2 + 46244.0 * e ** 3
            + 18369.0 * e ** 4)
    q_ee = (14304.0 + 29344.0 * e + 71068.0 * e ** 2 + 121568.0 * e ** 3
            + 65637.0 * e ** 4)
    q_ey = (512.0 + 1680.0 * e + 4405.0 * e ** 2 + 4455.0 * e ** 3
            + 3044.0 * e ** 4)
    q_yp = (7616.0 + 24832.0 * e + 25096.0 * e ** 2 + 27300.0 * e ** 3
            + 7719.0 * e ** 4)
    q_ye = (5568.0 + 29376.0 * e + 33400.0 * e ** 2 + 42444.0 * e ** 3
            + 15153.0 * e ** 4)
    q_yy = (2048.0 + 2880.0 * e + 7524.0 * e ** 2 + 5202.0 * e ** 3
            + 4385.0 * e ** 4)
    q = np.array([
        [(746.0 + 1152.0 * e + 715.0 * e ** 2) / (8.0 * p ** 4),
         (64.0 + 194.0 * e + 283.0 * e ** 2) / (4.0 * e * p ** 3),
         (64.0 + 84.0 * e + 109.0 * e ** 2) / (2.0 * p ** 3)],
        [q_ep / (128.0 * e * p ** 5), q_ee / (512.0 * e ** 2 * p ** 4),
         q_ey / (32.0 * e * p ** 4)],
        [q_yp / (64.0 * e ** 2 * p ** 5), q_ye / (128.0 * e ** 3 * p ** 4),
         q_yy / (64.0 * e ** 2 * p ** 4)],
    ])
    return InverseMatrices(m=m, n_p=n_p, n_e=n_e, n_y=n_y, q=q)


def approx_inverse(config, r):
    """Third-order approximation of (1 - eps d(alpha)/dr)^(-1) at r."""
    return inverse_matrices(config).combine(config.epsilon, r)


def _adjugate_inverse(mat):
    a, b, c = mat[0]
    d, e, f = mat[1]
    g, h, i = mat[2]
    cof = np.array([
        [e * i - f * h, c * h - b * i, b * f - c * e],
        [f * g - d * i, a * i - c * g, c * d - a * f],
        [d * h - e * g, b * g - a * h, a * e - b * d],
    ])
    det = a * cof[0, 0] + b * cof[1, 0] + c * cof[2, 0]
    if det <= 0.0:
        raise CapViolation("inverse lost positivity (det=%r)" % det)
    return cof / det


def exact_inverse(config, r):
    """Exact inverse of (1 - eps d(alpha)/dr) by the 3x3 adjugate."""
    table = bounds(config)
    mat = np.eye(3) - config.epsilon * table.dalpha_dr(np.asarray(r, float))
    return _adjugate_inverse(mat)


def make_system(config):
    """Assemble the PeriodicSystem driving the averaging machinery."""
    p0, e0, y0 = config.p0, config.e0, config.y0
    table = bounds(config)
    cap_fn = caps(config)
    slope = 6.0 * PI / p0 ** 3

    def f(i, theta):
        return kepler.j2_field(i[0], i[1], i[2], theta)

    def fbar(i):
        return np.array([0.0, 0.0, -3.0 * PI / i[0] ** 2])

    def s(i, theta):
        return s_closed(i[0], i[1], i[2], theta)

    def pbar_fn(i):
        return pbar(i[0], i[1], i[2])

    def jac_fn(i):
        return jac_fbar(i[0], i[1], i[2])

    def closed_j(i0, tau):
        return np.array([i0[0], i0[1],
                         i0[2] - 3.0 * PI * tau / i0[0] ** 2])

    def closed_r(tau):
        return closed_R_K(config, tau)[0]

    def closed_rinv(tau):
        return closed_R_K(config, tau)[1]

    def closed_k(tau):
        return closed_R_K(config, tau)[2]

    def rbound(tau):
        out = np.eye(3)
        out[2, 0] = slope * tau
        return out

    def drbound_dtau(tau):
        out = np.zeros((3, 3))
        out[2, 0] = slope
        return out

    return averaging.PeriodicSystem(
        dim=3, f=f, fbar=fbar, s=s, pbar=pbar_fn, jac_fbar=jac_fn,
        caps=cap_fn, bounds=table, rbound=rbound, pbound=rbound,
        drbound_dtau=drbound_dtau, closed_j=closed_j, closed_r=closed_r,
        closed_rinv=closed_rinv, closed_k=closed_k)
