"""Pure-Python reference kernels for the two direct integrations.

Same contracts as the compiled module: integrate the rescaled error
system L and the raw element system in fast time (orbit counter) for
the J2 problem.  These run through the generic adaptive integrator and
exist as the always-available fallback; the compiled module replaces
them when the extension is importable.
"""

import math

import numpy as np

from polarj2 import kepler, numerics

TWO_PI = 2.0 * math.pi

BACKEND = "pure"

_NAN3 = np.full(3, np.nan)


def _field_checked(p, e, y, theta):
    if p <= 0.0 or e <= 0.0 or e >= 1.0:
        return None
    return kepler.j2_field(p, e, y, theta)


def integrate_l(p0, e0, y0, eps, orbits, abs_tol=1e-10, rel_tol=1e-10,
                max_steps=20_000_000, initial_step=None):
    """Rescaled error system L(counter) on [0, orbits], L(0) = 0.

    dL/d(counter) = f(J + eps*L, 2*pi*counter) - fbar(J) evaluated along
    the averaged solution J(eps*counter), which keeps (p, e) frozen and
    drifts y linearly.
    """
    p0, e0, y0, eps = float(p0), float(e0), float(y0), float(eps)
    drift = 3.0 * math.pi * eps / p0 ** 2
    mean_y = 3.0 * math.pi / p0 ** 2

    def rhs(t, ell):
        yj = y0 - drift * t
        f = _field_checked(p0 + eps * ell[0], e0 + eps * ell[1],
                           yj + eps * ell[2], TWO_PI * t)
        if f is None:
            return _NAN3
        f = np.asarray(f, dtype=float)
        f[2] += mean_y
        return f

    cfg = numerics.IntegratorConfig(abs_tol=abs_tol, rel_tol=rel_tol,
                                    initial_step=initial_step,
                                    max_steps=max_steps)
    return numerics.integrate_ivp(rhs, np.zeros(3), (0.0, float(orbits)), cfg)


def integrate_elements(p0, e0, y0, eps, orbits, abs_tol=1e-10, rel_tol=1e-10,
                       max_steps=20_000_000, initial_step=None):
    """Raw element system dI/d(counter) = eps*f(I, 2*pi*counter)."""
    p0, e0, y0, eps = float(p0), float(e0), float(y0), float(eps)

    def rhs(t, i):
        f = _field_checked(i[0], i[1], i[2], TWO_PI * t)
        if f is None:
            return _NAN3
        return eps * np.asarray(f, dtype=float)

    cfg = numerics.IntegratorConfig(abs_tol=abs_tol, rel_tol=rel_tol,
                                    initial_step=initial_step,
                                    max_steps=max_steps)
    return numerics.integrate_ivp(rhs, np.array([p0, e0, y0]),
                                  (0.0, float(orbits)), cfg)
