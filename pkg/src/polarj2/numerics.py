"""Problem-independent numerical kernels.

Adaptive embedded Runge-Kutta 5(4) integration with dense output and
optional domain guards, barycentric Lagrange interpolation on equally
spaced nodes (with a piecewise-cubic alternative), quadrature on the
torus and on the unit segment, and grid maximization of periodic
functions.
"""

import math

import numpy as np

__all__ = [
    "IntegrationError",
    "QuadratureError",
    "IntegratorConfig",
    "SampledCurve",
    "integrate_ivp",
    "InterpolantPoly",
    "CubicCurve",
    "barycentric_interpolate",
    "grid_max_on_torus",
    "periodic_average",
    "segment_average",
]

TWO_PI = 2.0 * math.pi


class IntegrationError(RuntimeError):
    """Integration could not be completed (budget, step underflow, NaN)."""


class QuadratureError(RuntimeError):
    """Quadrature refinement failed to reach the requested tolerance."""


# Dormand-Prince 5(4) tableau.  C/A/B are the stage nodes, stage weights
# and the fifth-order solution weights; E gives the embedded error
# estimate (including the FSAL stage), P the quartic dense-output map.
DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
DP_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
])
DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
DP_E = np.array([
    71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40,
])
DP_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608,
     -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933,
     87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304,
     -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408,
     701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883,
     -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
# interior fractions at which domain guards are checked on accepted steps
GUARD_FRACTIONS = (0.25, 0.5, 0.75, 1.0)


class IntegratorConfig:
    """Tolerances and budgets for adaptive RK 5(4) integration."""

    def __init__(self, abs_tol=1e-10, rel_tol=1e-10, initial_step=None,
                 max_steps=1_000_000):
        if abs_tol <= 0.0 or rel_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if initial_step is not None and initial_step <= 0.0:
            raise ValueError("initial step must be positive")
        if max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        self.abs_tol = float(abs_tol)
        self.rel_tol = float(rel_tol)
        self.initial_step = initial_step
        self.max_steps = int(max_steps)

    def __repr__(self):
        return ("IntegratorConfig(abs_tol=%g, rel_tol=%g, initial_step=%r, "
                "max_steps=%d)" % (self.abs_tol, self.rel_tol,
                                   self.initial_step, self.max_steps))


class SampledCurve:
    """Trajectory on a strictly increasing time grid with dense output.

    ``nodes`` holds the accepted step times, ``values`` the states, and
    ``dense`` the per-step quartic interpolation coefficients, so the
    curve can be evaluated anywhere inside the covered interval.
    """

    def __init__(self, nodes, values, dense=None, guard_stopped=False,
                 guard_time=None, guard_message="", nfev=0):
        nodes = np.asarray(nodes, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if nodes.ndim != 1 or len(nodes) != len(values):
            raise ValueError("nodes and values must have matching length")
        if len(nodes) == 0:
            raise ValueError("curve must contain at least one node")
        if len(nodes) > 1 and not np.all(np.diff(nodes) > 0.0):
            raise ValueError("nodes must be strictly increasing")
        self.nodes = nodes
        self.values = values
        if dense is None:
            dense = np.zeros((max(len(nodes) - 1, 0), values.shape[1], 4))
        self.dense = np.asarray(dense, dtype=float)
        if self.dense.shape[0] != max(len(nodes) - 1, 0):
            raise ValueError("dense coefficients must cover every step")
        self.guard_stopped = bool(guard_stopped)
        self.guard_time = guard_time
        self.guard_message = guard_message
        self.nfev = int(nfev)

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def t0(self):
        return self.nodes[0]

    @property
    def t1(self):
        return self.nodes[-1]

    def __call__(self, t):
        """Evaluate the curve at scalar or array times inside [t0, t1]."""
        t_arr = np.asarray(t, dtype=float)
        scalar = t_arr.ndim == 0
        tt = np.atleast_1d(t_arr)
        slack = 4.0 * np.finfo(float).eps * max(abs(self.t0), abs(self.t1), 1.0)
        if np.any(tt < self.t0 - slack) or np.any(tt > self.t1 + slack):
            bad = tt[(tt < self.t0 - slack) | (tt > self.t1 + slack)][0]
            raise ValueError(
                "evaluation time %r outside covered interval [%r, %r]"
                % (bad, self.t0, self.t1))
        tt = np.clip(tt, self.t0, self.t1)
        if len(self.nodes) == 1:
            out = np.repeat(self.values, len(tt), axis=0)
        else:
            idx = np.searchsorted(self.nodes, tt, side="right") - 1
            idx = np.clip(idx, 0, len(self.nodes) - 2)
            h = self.nodes[idx + 1] - self.nodes[idx]
            theta = (tt - self.nodes[idx]) / h
            powers = theta[:, None] ** np.arange(1, 5)
            out = self.values[idx] + h[:, None] * np.einsum(
                "sdk,sk->sd", self.dense[idx], powers)
            # exact node reproduction (theta == 0 already exact; the right
            # endpoint needs the node value, not the quartic)
            exact = tt == self.nodes[-1]
            if np.any(exact):
                out[exact] = self.values[-1]
        return out[0] if scalar else out

    def sample(self, count):
        """Uniform sample of the curve: (times, values)."""
        ts = np.linspace(self.t0, self.t1, count)
        return ts, self(ts)


def _initial_step(field, t0, y0, f0, direction, cfg):
    """Starting step size heuristic (standard two-probe estimate)."""
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(y0)
    d0 = math.sqrt(float(np.mean((y0 / scale) ** 2)))
    d1 = math.sqrt(float(np.mean((f0 / scale) ** 2)))
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    y1 = y0 + h0 * direction * f0
    f1 = np.asarray(field(t0 + h0 * direction, y1), dtype=float)
    d2 = math.sqrt(float(np.mean(((f1 - f0) / scale) ** 2))) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1)


def integrate_ivp(field, y0, span, cfg=None, guard=None):
    """Integrate dy/dt = field(t, y) over span with RK 5(4).

    Returns a SampledCurve holding every accepted step plus dense output.
    If ``guard(t, y)`` turns false the trajectory is truncated at the
    last safe time and flagged (guard_stopped / guard_time).  Raises
    IntegrationError on step-budget exhaustion or a persistently
    non-finite right-hand side.
    """
    if cfg is None:
        cfg = IntegratorConfig()
    t0, t1 = float(span[0]), float(span[1])
    if not t1 > t0:
        raise ValueError("span must satisfy t1 > t0")
    y = np.array(y0, dtype=float).reshape(-1)
    dim = len(y)
    span_len = t1 - t0

    if guard is not None and not guard(t0, y):
        return SampledCurve(np.array([t0]), y[None, :], guard_stopped=True,
                            guard_time=t0,
                            guard_message="guard violated at initial state")

    f = np.asarray(field(t0, y), dtype=float)
    nfev = 1
    if not np.all(np.isfinite(f)):
        raise IntegrationError("non-finite right-hand side at t0")
    if cfg.initial_step is not None:
        h = float(cfg.initial_step)
    else:
        h = _initial_step(field, t0, y, f, 1.0, cfg)
        nfev += 1
    h = min(h, span_len)
    h_min = 16.0 * np.finfo(float).eps * max(abs(t0), abs(t1))

    ts = [t0]
    ys = [y.copy()]
    dense = []
    guard_stopped = False
    guard_time = None
    guard_message = ""
    t = t0
    k = np.empty((7, dim))
    steps = 0

    while t < t1:
        if steps >= cfg.max_steps:
            raise IntegrationError(
                "step budget exhausted (%d steps) at t=%r" % (steps, t))
        steps += 1
        h = min(h, t1 - t)
        if h <= h_min:
            raise IntegrationError("step size underflow at t=%r" % t)

        k[0] = f
        ok = True
        for i in range(1, 6):
            yi = y + h * (k[:i].T @ DP_A[i, :i])
            k[i] = field(t + DP_C[i] * h, yi)
            nfev += 1
            if not np.all(np.isfinite(k[i])):
                ok = False
                break
        if ok:
            y_new = y + h * (k[:6].T @ DP_B)
            t_new = t1 if (t1 - t) - h <= 1e-14 * span_len else t + h
            k[6] = field(t_new, y_new)
            nfev += 1
            ok = np.all(np.isfinite(y_new)) and np.all(np.isfinite(k[6]))
        if not ok:
            h *= 0.5
            continue

        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err_vec = h * (k.T @ DP_E)
        err = math.sqrt(float(np.mean((err_vec / scale) ** 2)))
        if err > 1.0:
            h *= max(MIN_FACTOR, SAFETY * err ** -0.2)
            continue

        q = k.T @ DP_P  # (dim, 4) dense-output coefficients for this step
        step_h = t_new - t

        if guard is not None:
            bad_frac = None
            prev_frac = 0.0
            for frac in GUARD_FRACTIONS:
                tg = t + frac * step_h
                yg = y_new if frac == 1.0 else y + step_h * (
                    q @ (frac ** np.arange(1, 5)))
                if not guard(tg, yg):
                    bad_frac = frac
                    break
                prev_frac = frac
            if bad_frac is not None:
                lo, hi = prev_frac, bad_frac
                for _ in range(60):
                    if (hi - lo) * step_h <= 1e-13 * max(span_len, 1.0):
                        break
                    mid = 0.5 * (lo + hi)
                    ym = y + step_h * (q @ (mid ** np.arange(1, 5)))
                    if guard(t + mid * step_h, ym):
                        lo = mid
                    else:
                        hi = mid
                guard_stopped = True
                guard_time = t + hi * step_h
                guard_message = ("guard violated near t=%r" % guard_time)
                if lo > 0.0:
                    t_safe = t + lo * step_h
                    y_safe = y + step_h * (q @ (lo ** np.arange(1, 5)))
                    ts.append(t_safe)
                    ys.append(y_safe)
                    dense.append(_rescale_dense(q, step_h, t_safe - t))
                break

        ts.append(t_new)
        ys.append(y_new.copy())
        dense.append(q.copy())
        t = t_new
        y = y_new
        f = k[6]
        if err == 0.0:
            factor = MAX_FACTOR
        else:
            factor = min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * err ** -0.2))
        h = h * factor

    return SampledCurve(np.array(ts), np.array(ys),
                        np.array(dense) if dense else None,
                        guard_stopped=guard_stopped, guard_time=guard_time,
                        guard_message=guard_message, nfev=nfev)


def _rescale_dense(q, h_full, h_part):
    """Re-express quartic dense coefficients on a shortened step.

    y(t + x) = y0 + h_full * sum_k q_k (x/h_full)^k for x in [0, h_full];
    substituting x = theta*h_part gives coefficients in theta with the
    h_part prefactor used by SampledCurve.
    """
    ratio = h_part / h_full
    powers = ratio ** np.arange(1, 5)
    return q * powers[None, :] / ratio


class InterpolantPoly:
    """Barycentric Lagrange interpolant on equally spaced nodes.

    Second barycentric form with binomial weights; evaluation and the
    analytic first derivative are stable against the naive Lagrange
    product formula.  The polynomial has degree len(nodes) - 1 and may
    be evaluated anywhere (values beyond the node span extrapolate).
    """

    def __init__(self, nodes, values):
        nodes = np.asarray(nodes, dtype=float)
        values = np.asarray(values, dtype=float)
        if nodes.ndim != 1 or len(nodes) < 2:
            raise ValueError("need at least two interpolation nodes")
        if nodes.shape != values.shape:
            raise ValueError("nodes and values must have the same shape")
        gaps = np.diff(nodes)
        if np.any(gaps <= 0.0):
            raise ValueError("nodes must be strictly increasing")
        mean_gap = float(np.mean(gaps))
        if np.max(np.abs(gaps - mean_gap)) > 8.0 * np.finfo(float).eps * max(
                abs(nodes[0]), abs(nodes[-1]), 1.0):
            raise ValueError("nodes must be equally spaced")
        self.nodes = nodes
        self.values = values
        n = len(nodes)
        # (-1)^j C(n-1, j), normalized to unit maximum to keep the sums
        # within range for large n
        combs = [math.comb(n - 1, j) for j in range(n)]
        top = max(combs)
        self.weights = np.array(
            [((-1) ** j) * (c / top) for j, c in enumerate(combs)])
        self._snap = 1e3 * np.finfo(float).eps * max(
            abs(nodes[0]), abs(nodes[-1]), 1.0)

    @property
    def degree(self):
        return len(self.nodes) - 1

    @property
    def snap(self):
        """Half-width of the snap-to-node window around each node."""
        return self._snap

    def __call__(self, x):
        x_arr = np.asarray(x, dtype=float)
        scalar = x_arr.ndim == 0
        xx = np.atleast_1d(x_arr).astype(float)
        out = np.empty_like(xx)
        diff = xx[:, None] - self.nodes[None, :]
        near = np.abs(diff) <= self._snap
        hit = near.any(axis=1)
        if np.any(hit):
            idx = near[hit].argmax(axis=1)
            out[hit] = self.values[idx]
        rest = ~hit
        if np.any(rest):
            ratio = self.weights[None, :] / diff[rest]
            out[rest] = (ratio @ self.values) / ratio.sum(axis=1)
        return float(out[0]) if scalar else out

    def derivative(self, x):
        """First derivative of the interpolant."""
        x_arr = np.asarray(x, dtype=float)
        scalar = x_arr.ndim == 0
        xx = np.atleast_1d(x_arr).astype(float)
        out = np.empty_like(xx)
        diff = xx[:, None] - self.nodes[None, :]
        near = np.abs(diff) <= self._snap
        hit = near.any(axis=1)
        for m in np.nonzero(hit)[0]:
            i = int(near[m].argmax())
            wj_over_wi = self.weights / self.weights[i]
            terms = np.zeros(len(self.nodes))
            mask = np.arange(len(self.nodes)) != i
            terms[mask] = wj_over_wi[mask] / (self.nodes[i] - self.nodes[mask])
            d_row = terms
            d_row[i] = -np.sum(terms[mask])
            out[m] = d_row @ self.values
        rest = ~hit
        if np.any(rest):
            inv = 1.0 / diff[rest]
            wn = self.weights[None, :] * inv
            num = wn @ self.values
            den = wn.sum(axis=1)
            dnum = -(wn * inv) @ self.values
            dden = -(wn * inv).sum(axis=1)
            out[rest] = (dnum * den - num * dden) / den ** 2
        return float(out[0]) if scalar else out


def barycentric_interpolate(nodes, values):
    """Construct a barycentric Lagrange interpolant (see InterpolantPoly)."""
    return InterpolantPoly(nodes, values)


class CubicCurve:
    """Natural cubic spline through the given nodes.

    Robust low-degree alternative to the global interpolating
    polynomial; evaluation beyond the node span extends the end cubics.
    """

    def __init__(self, nodes, values):
        nodes = np.asarray(nodes, dtype=float)
        values = np.asarray(values, dtype=float)
        if nodes.ndim != 1 or len(nodes) < 3:
            raise ValueError("need at least three spline nodes")
        if np.any(np.diff(nodes) <= 0.0):
            raise ValueError("nodes must be strictly increasing")
        self.nodes = nodes
        self.values = values
        n = len(nodes)
        h = np.diff(nodes)
        # second derivatives from the tridiagonal natural-spline system
        lower = np.zeros(n)
        diag = np.ones(n)
        upper = np.zeros(n)
        rhs = np.zeros(n)
        for i in range(1, n - 1):
            lower[i] = h[i - 1]
            diag[i] = 2.0 * (h[i - 1] + h[i])
            upper[i] = h[i]
            rhs[i] = 6.0 * ((values[i + 1] - values[i]) / h[i]
                            - (values[i] - values[i - 1]) / h[i - 1])
        # Thomas algorithm
        cp = np.zeros(n)
        dp = np.zeros(n)
        cp[0] = upper[0] / diag[0]
        dp[0] = rhs[0] / diag[0]
        for i in range(1, n):
            m = diag[i] - lower[i] * cp[i - 1]
            cp[i] = upper[i] / m
            dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / m
        m2 = np.zeros(n)
        m2[-1] = dp[-1]
        for i in range(n - 2, -1, -1):
            m2[i] = dp[i] - cp[i] * m2[i + 1]
        self._h = h
        self._m2 = m2

    @property
    def second_derivatives(self):
        """Per-node second derivatives of the fitted spline."""
        return self._m2

    def _segment(self, x):
        idx = np.searchsorted(self.nodes, x, side="right") - 1
        return np.clip(idx, 0, len(self.nodes) - 2)

    def __call__(self, x):
        x_arr = np.asarray(x, dtype=float)
        scalar = x_arr.ndim == 0
        xx = np.atleast_1d(x_arr).astype(float)
        i = self._segment(xx)
        h = self._h[i]
        a = (self.nodes[i + 1] - xx) / h
        b = (xx - self.nodes[i]) / h
        out = (a * self.values[i] + b * self.values[i + 1]
               + ((a ** 3 - a) * self._m2[i]
                  + (b ** 3 - b) * self._m2[i + 1]) * h ** 2 / 6.0)
        return float(out[0]) if scalar else out

    def derivative(self, x):
        x_arr = np.asarray(x, dtype=float)
        scalar = x_arr.ndim == 0
        xx = np.atleast_1d(x_arr).astype(float)
        i = self._segment(xx)
        h = self._h[i]
        a = (self.nodes[i + 1] - xx) / h
        b = (xx - self.nodes[i]) / h
        out = ((self.values[i + 1] - self.values[i]) / h
               + (-(3.0 * a ** 2 - 1.0) * self._m2[i]
                  + (3.0 * b ** 2 - 1.0) * self._m2[i + 1]) * h / 6.0)
        return float(out[0]) if scalar else out


def grid_max_on_torus(g, q_count, refine=False):
    """Maximum of g over the grid 2*pi*q/q_count, q = 1..q_count.

    The grid maximum under-estimates the true maximum of a smooth g by
    O(1/q_count^2).  With refine=True a golden-section pass sharpens the
    estimate inside the bracketing grid interval.
    """
    if q_count < 1:
        raise ValueError("q_count must be at least 1")
    thetas = TWO_PI * np.arange(1, q_count + 1) / q_count
    vals = np.asarray([float(g(th)) for th in thetas])
    if not np.all(np.isfinite(vals)):
        bad_q = int(np.nonzero(~np.isfinite(vals))[0][0]) + 1
        raise ValueError("non-finite value at grid point q=%d (angle %r)"
                         % (bad_q, thetas[bad_q - 1]))
    best = int(np.argmax(vals))
    result = float(vals[best])
    if not refine:
        return result
    spacing = TWO_PI / q_count
    lo = thetas[best] - spacing
    hi = thetas[best] + spacing
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = float(g(c)), float(g(d))
    for _ in range(200):
        if b - a < 1e-12 * spacing:
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = float(g(c))
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = float(g(d))
    return max(result, fc, fd)


def _call_on_grid(g, thetas):
    try:
        vals = np.asarray(g(thetas), dtype=float)
        if vals.shape != thetas.shape:
            raise ValueError
        return vals
    except (TypeError, ValueError):
        return np.asarray([float(g(th)) for th in thetas])


def periodic_average(g, tol=1e-12, max_points=2 ** 20):
    """Mean of a 2*pi-periodic function, (1/2pi) * integral over a period.

    Uniform-grid averaging (trapezoid on the torus), refined by doubling
    until two consecutive levels agree within tol.
    """
    n = 16
    thetas = TWO_PI * np.arange(n) / n
    prev = float(np.mean(_call_on_grid(g, thetas)))
    while n <= max_points:
        n *= 2
        thetas = TWO_PI * np.arange(n) / n
        cur = float(np.mean(_call_on_grid(g, thetas)))
        if abs(cur - prev) <= tol:
            return cur
        prev = cur
    raise QuadratureError("periodic average did not converge to tol=%g" % tol)


def segment_average(g, tol=1e-12, max_panels=4096):
    """Average of g over [0, 1] by composite Gauss-Legendre quadrature."""
    glx, glw = np.polynomial.legendre.leggauss(16)
    glx = 0.5 * (glx + 1.0)
    glw = 0.5 * glw

    def level(panels):
        width = 1.0 / panels
        starts = width * np.arange(panels)
        xs = (starts[:, None] + width * glx[None, :]).ravel()
        vals = _call_on_grid(g, xs).reshape(panels, len(glx))
        return float(np.sum(vals @ glw) * width)

    panels = 1
    prev = level(panels)
    while panels <= max_panels:
        panels *= 2
        cur = level(panels)
        if abs(cur - prev) <= tol:
            return cur
        prev = cur
    raise QuadratureError("segment average did not converge to tol=%g" % tol)
