import numpy as np
import pytest

from polarj2 import averaging, j2problem, runner

POLAR = dict(p0=3.000, e0=0.6640, y0=0.0000, epsilon=5.457e-4)
COSB = dict(p0=1.973, e0=0.8817, y0=0.9600, epsilon=5.457e-4)


def config_for(preset, orbits, **overrides):
    base = dict(POLAR if preset == "polar" else COSB)
    base.update(overrides)
    return j2problem.J2Config.from_orbits(orbits=orbits, **base)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240911)


class _RunCache:
    """Session cache so the heavy pipeline runs once per setting."""

    def __init__(self):
        self._n = {}
        self._l = {}

    def n_operation(self, preset, orbits):
        key = (preset, orbits)
        if key not in self._n:
            self._n[key] = runner.run_n_operation(config_for(preset, orbits))
        return self._n[key]

    def l_operation(self, preset, orbits):
        key = (preset, orbits)
        if key not in self._l:
            self._l[key] = runner.run_l_operation(config_for(preset, orbits))
        return self._l[key]


@pytest.fixture(scope="session")
def runs():
    return _RunCache()


@pytest.fixture(scope="session")
def polar_pieces():
    """System, averaged solution, R, K, and tabulated envelope for the
    polar preset over 3000 orbits, shared by the slower tests."""
    config = config_for("polar", 3000.0)
    system = j2problem.make_system(config)
    j_curve = averaging.averaged_solution(system, config.i0, config.u)
    r_eval, rinv_eval = averaging.fundamental_matrices(system, j_curve,
                                                       config.u)
    k_eval = averaging.particular_k(system, j_curve, r_eval, config.u)
    a0 = averaging.a0_build(system, j_curve, r_eval, k_eval,
                            config.theta_grid, config.tau_grid, config.u,
                            mode="cubic", refine=True)
    return {
        "config": config, "system": system, "j_curve": j_curve,
        "r_eval": r_eval, "rinv_eval": rinv_eval, "k_eval": k_eval,
        "a0": a0,
    }
