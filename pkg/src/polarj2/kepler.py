"""Planar satellite motion in osculating element form with the J2 term.

Coordinates: polar (rho, theta) in the orbit plane of a satellite around
an oblate primary.  Elements (p, e, y): dimensionless semi-latus rectum
p = (semi-latus rectum)/radius, eccentricity e, pericenter angle y.  The
perturbation strength epsilon equals half the oblateness coefficient.
The independent variable for perturbed motion is the orbit counter
(accumulated angle / 2*pi), not physical time.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import numerics

__all__ = [
    "DomainError",
    "PlanetModel",
    "PlanarState",
    "KeplerElements",
    "OrbitGeometry",
    "EARTH",
    "elements_from_state",
    "state_from_elements",
    "apsides_and_period",
    "elements_from_apsides",
    "j2_epsilon_ellipsoid",
    "j2_potential_w",
    "field_from_potential",
    "j2_field",
    "j2_mean_field",
    "physical_time",
]

TWO_PI = 2.0 * math.pi


class DomainError(ValueError):
    """State or elements outside the admissible region."""


@dataclass(frozen=True)
class PlanetModel:
    """Primary body: gravitational parameter, reference radius, oblateness.

    gm in m^3/s^2, radius in m, epsilon dimensionless (half the J2
    coefficient of the quadrupole potential).
    """

    gm: float
    radius: float
    epsilon: float

    def __post_init__(self):
        if self.gm <= 0.0 or self.radius <= 0.0:
            raise ValueError("gm and radius must be positive")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")


EARTH = PlanetModel(gm=3.98600442e14, radius=6.378135e6, epsilon=5.457e-4)


@dataclass(frozen=True)
class PlanarState:
    """Polar-plane state (rho_dot, theta_dot, rho, theta), SI units."""

    rho_dot: float
    theta_dot: float
    rho: float
    theta: float

    def __post_init__(self):
        if self.rho <= 0.0:
            raise ValueError("rho must be positive")
        object.__setattr__(self, "theta", self.theta % TWO_PI)


@dataclass(frozen=True)
class KeplerElements:
    """Osculating elements (p, e, y) plus the angular coordinate theta.

    y is a real lift of the pericenter angle: any real value is allowed
    and conversions pick the representative in (theta - pi, theta + pi].
    """

    p: float
    e: float
    y: float
    theta: float

    def __post_init__(self):
        if self.p <= 0.0:
            raise DomainError("p must be positive")
        if not 0.0 < self.e < 1.0:
            raise DomainError("e must lie strictly between 0 and 1")
        object.__setattr__(self, "theta", self.theta % TWO_PI)


@dataclass(frozen=True)
class OrbitGeometry:
    """Apsidal radii (m) and orbital period (s) of an unperturbed orbit."""

    rho_apo: float
    rho_peri: float
    period: float


def specific_energy(state, planet):
    """Specific orbital energy of a planar state."""
    return (0.5 * state.rho_dot ** 2
            + 0.5 * (state.rho * state.theta_dot) ** 2
            - planet.gm / state.rho)


def elements_from_state(state, planet):
    """Osculating elements of a planar state.

    The state must be prograde (theta_dot > 0) and bound (negative
    energy); circular and unbound cases are rejected.  The pericenter
    angle is returned as the representative in (theta - pi, theta + pi],
    with the branch fixed by sign sin(theta - y) = sign rho_dot.
    """
    if state.theta_dot <= 0.0:
        raise DomainError("state must have theta_dot > 0")
    energy = specific_energy(state, planet)
    if energy >= 0.0:
        raise DomainError("state must be bound (negative energy)")
    gm, radius = planet.gm, planet.radius
    ang = state.rho ** 2 * state.theta_dot  # specific angular momentum
    p = ang ** 2 / (gm * radius)
    e_sq = 1.0 + 2.0 * ang ** 2 * energy / gm ** 2
    if e_sq <= 1e-24:
        raise DomainError("orbit is numerically circular (e ~ 0)")
    e = math.sqrt(e_sq)
    if e >= 1.0:
        raise DomainError("orbit is not elliptic (e >= 1)")
    cos_d = (radius * p / state.rho - 1.0) / e
    cos_d = min(1.0, max(-1.0, cos_d))
    sin_d = math.copysign(math.sqrt(max(0.0, 1.0 - cos_d ** 2)),
                          state.rho_dot) if state.rho_dot != 0.0 else 0.0
    delta = math.atan2(sin_d, cos_d)
    if delta == -math.pi:
        delta = math.pi
    # delta in (-pi, pi]; y = theta - delta lies in [theta - pi, theta + pi)
    # and the left endpoint only occurs for delta == pi -> map to theta + pi
    if delta == math.pi:
        y = state.theta + math.pi
    else:
        y = state.theta - delta
    return KeplerElements(p=p, e=e, y=y, theta=state.theta)


def state_from_elements(elems, planet):
    """Planar state realizing the given osculating elements."""
    gm, radius = planet.gm, planet.radius
    p, e, y, theta = elems.p, elems.e, elems.y, elems.theta
    c = math.cos(theta - y)
    rho = radius * p / (1.0 + e * c)
    rho_dot = math.sqrt(gm / (radius * p)) * e * math.sin(theta - y)
    theta_dot = math.sqrt(gm / (radius ** 3 * p ** 3)) * (1.0 + e * c) ** 2
    return PlanarState(rho_dot=rho_dot, theta_dot=theta_dot, rho=rho,
                       theta=theta)


def apsides_and_period(p, e, planet):
    """Apsidal radii and period of the ellipse with elements (p, e)."""
    if p <= 0.0 or not 0.0 < e < 1.0:
        raise DomainError("need p > 0 and 0 < e < 1")
    radius = planet.radius
    rho_apo = radius * p / (1.0 - e)
    rho_peri = radius * p / (1.0 + e)
    period = TWO_PI * math.sqrt(
        radius ** 3 * p ** 3 / (planet.gm * (1.0 - e ** 2) ** 3))
    return OrbitGeometry(rho_apo=rho_apo, rho_peri=rho_peri, period=period)


def elements_from_apsides(rho_apo, rho_peri, planet):
    """(p, e) of the ellipse with the given apsidal radii."""
    if not 0.0 < rho_peri < rho_apo:
        raise DomainError("need 0 < rho_peri < rho_apo")
    p = 2.0 * rho_apo * rho_peri / (planet.radius * (rho_apo + rho_peri))
    e = (rho_apo - rho_peri) / (rho_apo + rho_peri)
    return p, e


def j2_epsilon_ellipsoid(alpha):
    """Perturbation strength of a homogeneous oblate ellipsoid.

    alpha is the polar-to-equatorial axis ratio (0 < alpha <= 1);
    epsilon = (1 - alpha^2)/10.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("axis ratio must lie in (0, 1]")
    return (1.0 - alpha ** 2) / 10.0


def j2_potential_w(rho, theta, planet):
    """Shape function of the quadrupole potential correction.

    The correction to the point-mass potential is epsilon * W with
    W = -(gm * radius^2 / rho^3) * (1 - 3 cos^2 theta); theta measured
    from the equatorial plane of a polar orbit.
    """
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(rho <= 0.0):
        raise DomainError("rho must be positive")
    out = (-planet.gm * planet.radius ** 2 / rho ** 3
           * (1.0 - 3.0 * np.cos(theta) ** 2))
    return float(out) if out.ndim == 0 else out


def field_from_potential(p, e, y, theta, planet):
    """Element rates per orbit from the quadrupole potential gradient.

    Evaluates the generalized forces q_rho = -dW/drho, q_theta =
    -dW/dtheta at the state realizing (p, e, y, theta) and assembles the
    orbit-counter rates (common factor epsilon removed).  Shapes
    broadcast; the last axis of the result indexes (p, e, y).
    """
    p = np.asarray(p, dtype=float)
    e = np.asarray(e, dtype=float)
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(e == 0.0):
        raise DomainError("e = 0 is outside the element chart")
    gm, radius = planet.gm, planet.radius
    c = np.cos(theta - y)
    s = np.sin(theta - y)
    one = 1.0 + e * c
    rho = radius * p / one
    # analytic partials of W = -(gm R^2 / rho^3)(1 - 3 cos^2 theta)
    dw_drho = 3.0 * gm * radius ** 2 / rho ** 4 * (1.0 - 3.0 * np.cos(theta) ** 2)
    dw_dtheta = -3.0 * gm * radius ** 2 / rho ** 3 * np.sin(2.0 * theta)
    q_rho = -dw_drho
    q_theta = -dw_dtheta
    qr = radius ** 2 * q_rho / gm  # dimensionless combinations
    qt = radius * q_theta / gm
    den = one ** 2
    f_p = 4.0 * math.pi * p ** 2 * qt / den
    f_e = (2.0 * math.pi * p ** 2 * s * qr / den
           + math.pi * p * (3.0 * e + 4.0 * c + e * np.cos(2.0 * (theta - y)))
           * qt / den)
    f_y = (-2.0 * math.pi * p ** 2 * c * qr / (e * den)
           + 2.0 * math.pi * p * s * (2.0 + e * c) * qt / (e * den))
    return np.stack(np.broadcast_arrays(f_p, f_e, f_y), axis=-1)


def j2_field(p, e, y, theta):
    """Closed-form element rates per orbit (epsilon removed).

    Same quantity as field_from_potential, written as explicit
    trigonometric polynomials.  Broadcasts and preserves complex input
    (supporting complex-step differentiation); last axis indexes
    (p, e, y).
    """
    p = np.asarray(p)
    e = np.asarray(e)
    y = np.asarray(y)
    theta = np.asarray(theta)
    if np.any(e == 0.0):
        raise DomainError("e = 0 is outside the element chart")
    pi = math.pi
    f_p = (6.0 * pi / p) * (e * np.sin(theta + y) + 2.0 * np.sin(2.0 * theta)
                            + e * np.sin(3.0 * theta - y))
    e2 = e * e
    f_e = (3.0 * pi / (8.0 * p ** 2)) * (
        e2 * np.sin(theta - 3.0 * y)
        + (8.0 + 2.0 * e2) * np.sin(theta - y)
        + (4.0 + 11.0 * e2) * np.sin(theta + y)
        + 8.0 * e * np.sin(2.0 * theta - 2.0 * y)
        + 40.0 * e * np.sin(2.0 * theta)
        + 2.0 * e2 * np.sin(3.0 * theta - 3.0 * y)
        + (28.0 + 17.0 * e2) * np.sin(3.0 * theta - y)
        + 24.0 * e * np.sin(4.0 * theta - 2.0 * y)
        + 5.0 * e2 * np.sin(5.0 * theta - 3.0 * y))
    f_y = (-3.0 * pi / p ** 2
           - (3.0 * pi / (8.0 * e * p ** 2)) * (
               e2 * np.cos(theta - 3.0 * y)
               + (8.0 + 6.0 * e2) * np.cos(theta - y)
               - (4.0 - 7.0 * e2) * np.cos(theta + y)
               + 8.0 * e * np.cos(2.0 * theta - 2.0 * y)
               + 24.0 * e * np.cos(2.0 * theta)
               + 2.0 * e2 * np.cos(3.0 * theta - 3.0 * y)
               + (28.0 + 11.0 * e2) * np.cos(3.0 * theta - y)
               + 24.0 * e * np.cos(4.0 * theta - 2.0 * y)
               + 5.0 * e2 * np.cos(5.0 * theta - 3.0 * y)))
    return np.stack(np.broadcast_arrays(f_p, f_e, f_y), axis=-1)


def j2_mean_field(p):
    """Average of j2_field over the angle: (0, 0, -3*pi/p^2)."""
    p = np.asarray(p, dtype=float)
    zero = np.zeros_like(p)
    return np.stack(np.broadcast_arrays(zero, zero, -3.0 * math.pi / p ** 2),
                    axis=-1)


def physical_time(elements_curve, planet, cfg=None):
    """Elapsed physical time along an element trajectory.

    elements_curve maps the orbit counter to (p, e, y); the result is
    the scalar curve t(orbit counter) in seconds, obtained from
    dt/d(counter) = 2*pi/theta_dot with theta = 2*pi * counter.
    """
    t0, t1 = elements_curve.t0, elements_curve.t1

    def rate(counter, _):
        vals = np.asarray(elements_curve(counter), dtype=float).reshape(-1)
        p, e, yy = vals[0], vals[1], vals[2]
        theta = TWO_PI * counter
        td = math.sqrt(planet.gm / (planet.radius ** 3 * p ** 3)) * (
            1.0 + e * math.cos(theta - yy)) ** 2
        return np.array([TWO_PI / td])

    if cfg is None:
        cfg = numerics.IntegratorConfig(abs_tol=1e-10, rel_tol=1e-10)
    return numerics.integrate_ivp(rate, np.array([0.0]), (t0, t1), cfg)
