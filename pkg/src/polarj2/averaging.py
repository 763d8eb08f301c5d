"""Averaging machinery for one-frequency perturbed periodic systems.

Given slow variables I driven by dI/d(counter) = epsilon * f(I, angle)
with angle = 2*pi * counter, the averaged flow J solves dJ/dtau =
fbar(J) in slow time tau = epsilon * counter.  This module constructs
the averaged solution, the fundamental/particular solutions of its
variational equation, the tabulated base envelope, the contraction
fixed point seeding the error envelopes, and the envelope estimator ODE
whose solution n(tau) dominates the rescaled averaging error.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import numerics

__all__ = [
    "PeriodicSystem",
    "AnalyticCurve",
    "AveragedFlow",
    "A0Set",
    "FixedPointReport",
    "EstimatorCurves",
    "EstimatorBlowup",
    "SingularFundamentalMatrix",
    "averaged_solution",
    "fundamental_matrices",
    "particular_k",
    "a0_build",
    "alpha_eval",
    "gamma_eval",
    "fixed_point",
    "estimator_ode",
]

TWO_PI = 2.0 * math.pi


class EstimatorBlowup(RuntimeError):
    """Envelope estimator left its admissible domain."""

    def __init__(self, tau, condition):
        super().__init__("estimator guard violated near tau=%r: %s"
                         % (tau, condition))
        self.tau = tau
        self.condition = condition


class SingularFundamentalMatrix(RuntimeError):
    """Fundamental matrix lost invertibility."""


@dataclass
class PeriodicSystem:
    """One-frequency system with its averaging bound machinery.

    f(i, theta) and s(i, theta) must broadcast over theta (returning
    (..., dim) arrays); fbar, pbar, jac_fbar act on a single state.
    bounds supplies the majorant tables (see j2problem.BoundTable for
    the interface); caps(tau) gives the per-component validity radii
    (np.inf allowed).  rbound/pbound/drbound_dtau are the C1 matrix
    majorants of the fundamental matrix, its inverse, and the rbound
    slope.  Closed-form solutions are optional shortcuts; when absent,
    ODE integration is used.
    """

    dim: int
    f: object
    fbar: object
    s: object
    pbar: object
    jac_fbar: object
    caps: object
    bounds: object
    rbound: object
    pbound: object
    drbound_dtau: object
    closed_j: object = None
    closed_r: object = None
    closed_rinv: object = None
    closed_k: object = None


class AnalyticCurve:
    """Closed-form curve with the SampledCurve calling convention."""

    def __init__(self, fn, t0, t1):
        self.fn = fn
        self.t0 = float(t0)
        self.t1 = float(t1)

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        scalar = t_arr.ndim == 0
        tt = np.atleast_1d(t_arr)
        slack = 4.0 * np.finfo(float).eps * max(abs(self.t0), abs(self.t1), 1.0)
        if np.any(tt < self.t0 - slack) or np.any(tt > self.t1 + slack):
            raise ValueError("evaluation outside covered interval")
        out = np.asarray([np.asarray(self.fn(float(t_)), dtype=float)
                          for t_ in tt])
        return out[0] if scalar else out


@dataclass
class AveragedFlow:
    """Averaged solution with its variational solutions over [0, horizon]."""

    j: object
    r: object
    rinv: object
    k: object
    horizon: float


def averaged_solution(system, i0, u, cfg=None):
    """Averaged trajectory J on [0, u] with J(0) = i0."""
    i0 = np.asarray(i0, dtype=float)
    if system.closed_j is not None:
        return AnalyticCurve(lambda tau: system.closed_j(i0, tau), 0.0, u)
    if cfg is None:
        cfg = numerics.IntegratorConfig(abs_tol=1e-12, rel_tol=1e-12)
    return numerics.integrate_ivp(lambda tau, j: system.fbar(j), i0,
                                  (0.0, u), cfg)


def fundamental_matrices(system, j_curve, u, cfg=None):
    """Fundamental matrix R(tau) of the averaged variational equation
    and its inverse, as matrix-valued evaluators on [0, u]."""
    d = system.dim
    if system.closed_r is not None:
        r_eval = system.closed_r
        if system.closed_rinv is not None:
            rinv_eval = system.closed_rinv
        else:
            rinv_eval = lambda tau: _checked_inv(r_eval(tau), tau)
        return r_eval, rinv_eval
    if cfg is None:
        cfg = numerics.IntegratorConfig(abs_tol=1e-12, rel_tol=1e-12)

    def rhs(tau, vec):
        jac = np.asarray(system.jac_fbar(j_curve(tau)), dtype=float)
        return (jac @ vec.reshape(d, d)).ravel()

    curve = numerics.integrate_ivp(rhs, np.eye(d).ravel(), (0.0, u), cfg)
    r_eval = lambda tau: np.asarray(curve(tau)).reshape(d, d)
    rinv_eval = lambda tau: _checked_inv(r_eval(tau), tau)
    return r_eval, rinv_eval


def _checked_inv(mat, tau):
    det = np.linalg.det(mat)
    if abs(det) < 1e-12:
        raise SingularFundamentalMatrix(
            "fundamental matrix determinant %r at tau=%r" % (det, tau))
    return np.linalg.inv(mat)


def particular_k(system, j_curve, r_eval, u, cfg=None):
    """Particular solution K of dK/dtau = jac_fbar(J) K + pbar(J), K(0)=0."""
    if system.closed_k is not None:
        return system.closed_k
    if cfg is None:
        cfg = numerics.IntegratorConfig(abs_tol=1e-12, rel_tol=1e-12)

    def rhs(tau, k):
        jc = j_curve(tau)
        jac = np.asarray(system.jac_fbar(jc), dtype=float)
        return jac @ k + np.asarray(system.pbar(jc), dtype=float)

    curve = numerics.integrate_ivp(rhs, np.zeros(system.dim), (0.0, u), cfg)
    return lambda tau: np.asarray(curve(tau))


class A0Set:
    """Per-component tabulated base envelopes with analytic derivatives."""

    def __init__(self, parts, nodes, node_values):
        self.parts = parts
        self.nodes = np.asarray(nodes, dtype=float)
        self.node_values = np.asarray(node_values, dtype=float)

    def value(self, tau):
        return np.array([part(tau) for part in self.parts])

    def derivative(self, tau):
        return np.array([part.derivative(tau) for part in self.parts])


def a0_build(system, j_curve, r_eval, k_eval, q_count, n_count, u,
             mode="lagrange", refine=False):
    """Tabulate the base envelope a0 and interpolate it over [0, u).

    Node n at tau_n = u*n/n_count carries, per component i, the grid
    maximum over theta of |s(J(tau_n), theta) - R(tau_n) s(I0, 0) -
    K(tau_n)|_i with theta on the q_count-point torus grid.  The
    interpolant (global Lagrange polynomial by default, natural cubic
    spline in "cubic" mode) may be evaluated on all of [0, u).
    """
    if mode not in ("lagrange", "cubic"):
        raise ValueError("mode must be 'lagrange' or 'cubic'")
    if n_count < 2 or q_count < 1:
        raise ValueError("need n_count >= 2 and q_count >= 1")
    nodes = u * np.arange(n_count) / n_count
    thetas = TWO_PI * np.arange(1, q_count + 1) / q_count
    i0 = np.asarray(j_curve(0.0), dtype=float)
    s0 = np.asarray(system.s(i0, 0.0), dtype=float).reshape(-1)
    vals = np.empty((n_count, system.dim))
    for n, tau in enumerate(nodes):
        jn = np.asarray(j_curve(tau), dtype=float)
        rn = np.asarray(r_eval(tau), dtype=float)
        kn = np.asarray(k_eval(tau), dtype=float).reshape(-1)
        base = rn @ s0 + kn
        svals = np.asarray(system.s(jn, thetas), dtype=float)
        resid = np.abs(svals - base[None, :])
        if not np.all(np.isfinite(resid)):
            raise ValueError("non-finite envelope residual at tau=%r" % tau)
        if refine:
            for i in range(system.dim):
                gi = lambda th, i=i: abs(
                    float(np.asarray(system.s(jn, th), dtype=float)
                          .reshape(-1)[i]) - base[i])
                vals[n, i] = numerics.grid_max_on_torus(gi, q_count,
                                                        refine=True)
        else:
            vals[n] = resid.max(axis=0)
    if mode == "lagrange":
        parts = [numerics.InterpolantPoly(nodes, vals[:, i])
                 for i in range(system.dim)]
    else:
        parts = [numerics.CubicCurve(nodes, vals[:, i])
                 for i in range(system.dim)]
    return A0Set(parts, nodes, vals)


def alpha_eval(a0, bounds, eps, tau, r):
    """Contraction map alpha_i = a0_i(tau) + a_ik(r) r_k + eps*b_i(r)."""
    r = np.asarray(r, dtype=float)
    return (a0.value(tau) + np.asarray(bounds.a_matrix(r)) @ r
            + eps * np.asarray(bounds.b_vec(r)))


def gamma_eval(bounds, r, ell):
    """Envelope slope gamma_i = c_i(r) + d_ij(r) l_j + e_ijk(r) l_j l_k / 2."""
    r = np.asarray(r, dtype=float)
    ell = np.asarray(ell, dtype=float)
    e_t = np.asarray(bounds.e_tensor(r))
    return (np.asarray(bounds.c_vec(r))
            + np.asarray(bounds.d_matrix(r)) @ ell
            + 0.5 * np.einsum("ijk,j,k->i", e_t, ell, ell))


@dataclass
class FixedPointReport:
    """Result of the envelope fixed-point iteration with its hypotheses.

    l0 solves l = alpha(0, eps*l); residual is the sup-norm of the
    re-substitution defect; eps_contraction = eps * max row sum of the
    sampled partial-derivative majorant (must stay below 1).
    """

    l0: np.ndarray
    iterations: int
    residual: float
    eps_contraction: float
    a_matrix: np.ndarray
    box_center: np.ndarray
    box_halfwidth: np.ndarray
    flags: dict = field(default_factory=dict)

    @property
    def hypotheses_ok(self):
        return all(self.flags.values())


def fixed_point(a0, bounds, eps, caps0, center=None, halfwidth=None,
                tol=1e-12, max_iter=100):
    """Iterate l -> alpha(0, eps*l) to the envelope seed l0.

    Also machine-checks the contraction hypotheses on a box around the
    candidate fixed point: the box must sit inside the validity caps,
    eps * A must contract, and alpha(0, eps*.) must map the box into
    itself.  A is the sampled majorant of |d alpha/d r| over the box
    (9 points per axis, inflated by 5%).  Failed hypotheses are
    reported in flags, not fatal.
    """
    caps0 = np.asarray(caps0, dtype=float)
    a00 = a0.value(0.0)
    if center is None:
        center = a00 + eps * np.asarray(bounds.b_vec(np.zeros_like(a00)))
    center = np.asarray(center, dtype=float)
    if halfwidth is None:
        halfwidth = center * (1.0 - 1e-9)
        limit = 0.99 * caps0 / eps
        over = center + halfwidth > limit
        halfwidth = np.where(over, limit - center, halfwidth)
    halfwidth = np.asarray(halfwidth, dtype=float)

    flags = {}
    flags["box_positive"] = bool(np.all(halfwidth > 0.0)
                                 and np.all(center - halfwidth >= 0.0))
    flags["box_inside_caps"] = bool(
        np.all(center + halfwidth < caps0 / eps))

    # sampled majorant of |d alpha / d r| over the box
    axes = [np.linspace(c - h, c + h, 9)
            for c, h in zip(center, halfwidth)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    a_mat = np.zeros((len(center), len(center)))
    sample_ok = True
    for ell in pts:
        try:
            da = np.abs(np.asarray(bounds.dalpha_dr(eps * ell)))
        except Exception:
            sample_ok = False
            continue
        a_mat = np.maximum(a_mat, da)
    a_mat *= 1.05
    flags["majorant_sampled"] = sample_ok
    eps_contraction = eps * float(np.max(np.sum(a_mat, axis=1)))
    flags["contraction"] = eps_contraction < 1.0

    alpha_center = alpha_eval(a0, bounds, eps, 0.0, eps * center)
    box_lhs = np.abs(alpha_center - center) + eps * a_mat @ halfwidth
    flags["maps_into_box"] = bool(np.all(box_lhs < halfwidth))

    ell = a00.copy()
    iterations = 1
    converged = False
    for _ in range(max_iter):
        ell_new = alpha_eval(a0, bounds, eps, 0.0, eps * ell)
        iterations += 1
        delta = float(np.max(np.abs(ell_new - ell)))
        ell = ell_new
        if delta <= tol:
            converged = True
            break
    flags["converged"] = converged
    residual = float(np.max(np.abs(
        alpha_eval(a0, bounds, eps, 0.0, eps * ell) - ell)))
    return FixedPointReport(l0=ell, iterations=iterations, residual=residual,
                            eps_contraction=eps_contraction, a_matrix=a_mat,
                            box_center=center, box_halfwidth=halfwidth,
                            flags=flags)


@dataclass
class EstimatorCurves:
    """Envelope estimator output: m (drift budget) and n (envelope).

    curve is the combined (m, n) trajectory over slow time; n dominates
    the rescaled averaging error componentwise while the domain margins
    stay positive.  taus/m_values/n_values hold a uniform sample.
    """

    curve: object
    l0: np.ndarray
    taus: np.ndarray
    m_values: np.ndarray
    n_values: np.ndarray
    margins: dict
    fixed_point: FixedPointReport = None

    @property
    def dim(self):
        return self.n_values.shape[1]

    def n_at(self, tau):
        vals = np.asarray(self.curve(tau), dtype=float)
        return vals[..., self.dim:]

    def m_at(self, tau):
        vals = np.asarray(self.curve(tau), dtype=float)
        return vals[..., :self.dim]


def estimator_ode(a0, bounds, eps, l0, rbound, pbound, drbound_dtau,
                  inverse_provider, caps, u, cfg=None, sample_count=512,
                  fixed_point_report=None):
    """Integrate the envelope estimator over slow time [0, u].

    State (m, n): dm/dtau = pbound(tau) gamma(eps*n, n) from m(0) = 0,
    dn/dtau = inv * (a0'(tau) + eps rbound pbound gamma + eps rbound'
    m) from n(0) = l0, with inv = inverse_provider(eps*n) approximating
    (1 - eps d(alpha)/dr)^(-1).  Guards enforce 0 < eps*n < caps(tau)
    (finite components), n > 0, and a positive exact-inverse
    determinant; violation raises EstimatorBlowup with the failing tau.
    """
    l0 = np.asarray(l0, dtype=float)
    d = len(l0)
    if cfg is None:
        cfg = numerics.IntegratorConfig(abs_tol=1e-8, rel_tol=1e-8)
    nan = np.full(2 * d, np.nan)
    eye = np.eye(d)

    def rhs(tau, state):
        m = state[:d]
        n = state[d:]
        r = eps * n
        try:
            gm = gamma_eval(bounds, r, n)
            da0 = a0.derivative(tau)
            minv = np.asarray(inverse_provider(r), dtype=float)
        except Exception:
            return nan
        pb = np.asarray(pbound(tau), dtype=float)
        rb = np.asarray(rbound(tau), dtype=float)
        drb = np.asarray(drbound_dtau(tau), dtype=float)
        dm = pb @ gm
        dn = minv @ (da0 + eps * (rb @ dm) + eps * (drb @ m))
        return np.concatenate([dm, dn])

    def guard(tau, state):
        n = state[d:]
        r = eps * n
        rho = np.asarray(caps(tau), dtype=float)
        if np.any(n <= 0.0):
            return False
        finite = np.isfinite(rho)
        if np.any(r[finite] >= rho[finite]):
            return False
        try:
            da = np.asarray(bounds.dalpha_dr(r), dtype=float)
        except Exception:
            return False
        return float(np.linalg.det(eye - eps * da)) > 0.0

    state0 = np.concatenate([np.zeros(d), l0])
    curve = numerics.integrate_ivp(rhs, state0, (0.0, u), cfg, guard=guard)
    if curve.guard_stopped:
        raise EstimatorBlowup(curve.guard_time, curve.guard_message)
    return package_estimator(curve, l0, bounds, eps, caps,
                             sample_count=sample_count,
                             fixed_point_report=fixed_point_report)


def package_estimator(curve, l0, bounds, eps, caps, sample_count=512,
                      fixed_point_report=None):
    """Wrap a raw (m, n) trajectory into EstimatorCurves with margins."""
    l0 = np.asarray(l0, dtype=float)
    d = len(l0)
    taus, states = curve.sample(sample_count)
    m_values = states[:, :d]
    n_values = states[:, d:]
    rho = np.asarray([caps(tau) for tau in taus], dtype=float)
    finite = np.isfinite(rho)
    cap_margin = np.where(finite, rho - eps * n_values, np.inf)
    eye = np.eye(d)
    dets = np.asarray([
        np.linalg.det(eye - eps * np.asarray(bounds.dalpha_dr(eps * n)))
        for n in n_values])
    margins = {
        "min_cap_margin": float(np.min(cap_margin)),
        "min_envelope": float(np.min(n_values)),
        "min_inverse_det": float(np.min(dets)),
    }
    return EstimatorCurves(curve=curve, l0=l0, taus=taus, m_values=m_values,
                           n_values=n_values, margins=margins,
                           fixed_point=fixed_point_report)
