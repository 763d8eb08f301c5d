"""Top-level acceptance checks for the shipped configuration.

One test per numbered criterion; each prints an unmissable
"ACCEPTANCE n: PASS/FAIL" verdict line bypassing output capture, and
the assertion message carries the failing sub-checks.
"""

import dataclasses
import math
import time

import numpy as np
import pytest

import aux_oracles as ax
import majorization_suite as ms
from conftest import config_for
from polarj2 import averaging, cli, j2problem, kepler, numerics, runner

TWO_PI = 2.0 * math.pi


@pytest.fixture
def verdict(capsys):
    def emit(number, failures):
        ok = not failures
        with capsys.disabled():
            print("\nACCEPTANCE %d: %s" % (number, "PASS" if ok else "FAIL"))
        assert ok, "; ".join(failures)
    return emit


def test_criterion_1_averaged_drift(verdict):
    failures = []
    start = time.perf_counter()
    targets = {"polar": (-1.047, -34.29), "cosb": (-2.421, -78.31)}
    for preset, (slope_want, end_want) in targets.items():
        cfg = config_for(preset, 60000.0)
        system = j2problem.make_system(cfg)
        j_curve = averaging.averaged_solution(system, cfg.i0, cfg.u)
        ends = np.asarray(j_curve(np.array([0.0, cfg.u])))
        slope = (ends[1, 2] - ends[0, 2]) / cfg.u
        if abs(slope - slope_want) >= 5e-4:
            failures.append("%s slope %r vs %r" % (preset, slope, slope_want))
        if abs(ends[1, 2] - end_want) >= 0.01:
            failures.append("%s end %r vs %r"
                            % (preset, ends[1, 2], end_want))
        if np.abs(ends[1, :2] - ends[0, :2]).max() >= 1e-12:
            failures.append("%s p/e drifted" % preset)
    elapsed = time.perf_counter() - start
    if elapsed >= 1.0:
        failures.append("runtime %.3fs >= 1s" % elapsed)
    verdict(1, failures)


def test_criterion_2_geometry(verdict):
    failures = []
    start = time.perf_counter()
    targets = {
        "polar": (3.000, 0.6640, 56950e3, 11500e3, 17.50 * 3600.0),
        "cosb": (1.973, 0.8817, 106400e3, 6688e3, 37.16 * 3600.0),
    }
    for preset, (p, e, apo, peri, period) in targets.items():
        geom = kepler.apsides_and_period(p, e, kepler.EARTH)
        for name, got, want in (("apoapsis", geom.rho_apo, apo),
                                ("periapsis", geom.rho_peri, peri),
                                ("period", geom.period, period)):
            if abs(got - want) / want >= 1e-3:
                failures.append("%s %s %r vs %r" % (preset, name, got, want))
    elapsed = time.perf_counter() - start
    if elapsed >= 1.0:
        failures.append("runtime %.3fs >= 1s" % elapsed)
    verdict(2, failures)


def test_criterion_3_field_equivalence(verdict):
    failures = []
    rng = np.random.default_rng(20260817)
    n = 10_000
    p = rng.uniform(0.5, 5.0, n)
    e = rng.uniform(0.05, 0.95, n)
    y = rng.uniform(-10.0, 10.0, n)
    th = rng.uniform(0.0, TWO_PI, n)
    closed = kepler.j2_field(p, e, y, th)
    assembled = kepler.field_from_potential(p, e, y, th, kepler.EARTH)
    rel = np.abs(assembled - closed) / (1.0 + np.abs(closed))
    worst = float(rel.max())
    if worst >= 1e-9:
        failures.append("relative field mismatch %r" % worst)
    verdict(3, failures)


def test_criterion_4_auxiliary_consistency(verdict, polar_pieces):
    failures = []
    rng = np.random.default_rng(4082)
    points = np.column_stack([rng.uniform(0.8, 4.0, 6),
                              rng.uniform(0.1, 0.9, 6),
                              rng.uniform(-3.0, 3.0, 6)])

    worst_mean = 0.0
    for i in points:
        for k in range(3):
            mean_k = numerics.periodic_average(
                lambda t, k=k, i=i: j2problem.s_closed(i[0], i[1], i[2],
                                                       t)[..., k])
            worst_mean = max(worst_mean, abs(mean_k))
    if worst_mean >= 1e-10:
        failures.append("mean of s is %r" % worst_mean)

    h = 1e-6
    worst_fd = 0.0
    for i in points:
        th = rng.uniform(0.0, TWO_PI, 16)
        fd = (j2problem.s_closed(i[0], i[1], i[2], th + h)
              - j2problem.s_closed(i[0], i[1], i[2], th - h)) / (2.0 * h)
        direct = (kepler.j2_field(i[0], i[1], i[2], th)
                  - kepler.j2_mean_field(i[0]))
        worst_fd = max(worst_fd, float(np.abs(TWO_PI * fd - direct).max()))
    if worst_fd >= 1e-6:
        failures.append("2*pi ds/dtheta defect %r" % worst_fd)

    worst_pbar = 0.0
    for i in points:
        diff = np.abs(j2problem.pbar(*i) - ax.pbar(i)).max()
        worst_pbar = max(worst_pbar, float(diff))
    if worst_pbar >= 1e-7:
        failures.append("pbar defect %r" % worst_pbar)

    system = polar_pieces["system"]
    j_curve = polar_pieces["j_curve"]
    u = polar_pieces["config"].u
    stripped = dataclasses.replace(system, closed_r=None, closed_rinv=None,
                                   closed_k=None)
    r_ode, _ = averaging.fundamental_matrices(stripped, j_curve, u)
    k_ode = averaging.particular_k(stripped, j_curve, r_ode, u)
    worst_r = 0.0
    worst_k = 0.0
    for tau in (0.0, 0.31 * u, 0.77 * u, u):
        worst_r = max(worst_r, float(np.abs(
            np.asarray(r_ode(tau)) - np.asarray(system.closed_r(tau))).max()))
        worst_k = max(worst_k, float(np.abs(
            np.asarray(k_ode(tau)) - np.asarray(system.closed_k(tau))).max()))
    if worst_r >= 1e-7:
        failures.append("fundamental matrix defect %r" % worst_r)
    if worst_k >= 1e-7:
        failures.append("particular solution defect %r" % worst_k)
    verdict(4, failures)


def test_criterion_5_majorization(verdict):
    failures = []
    cfg = config_for("polar", 3000.0)
    start = time.perf_counter()
    results = ms.run_suite(cfg, 10_000, seed=20240917)
    elapsed = time.perf_counter() - start
    for name in sorted(results):
        violations, margin = results[name]
        if violations:
            failures.append("inequality %s: %d violations (worst margin %r)"
                            % (name, violations, margin))
    if elapsed >= 300.0:
        failures.append("runtime %.1fs >= 300s" % elapsed)
    verdict(5, failures)


def test_criterion_6_fixed_point(verdict, runs):
    failures = []
    for preset in ("polar", "cosb"):
        fp = runs.n_operation(preset, 3000.0).fixed_point
        if not fp.eps_contraction < 1.0:
            failures.append("%s contraction %r" % (preset,
                                                   fp.eps_contraction))
        if not fp.residual < 1e-10:
            failures.append("%s residual %r" % (preset, fp.residual))
        if not fp.iterations < 50:
            failures.append("%s iterations %d" % (preset, fp.iterations))
        if not fp.hypotheses_ok:
            failures.append("%s hypotheses %r" % (preset, fp.flags))
    verdict(6, failures)


def test_criterion_7_approximate_inverse(verdict):
    failures = []
    coef = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
    n0 = np.array([2.9, 1.4, 0.93])
    for preset in ("polar", "cosb"):
        base = config_for(preset, 3000.0)

        def z_fd(table, h):
            out = np.empty((3, 3))
            for j in range(3):
                cols = []
                for k in range(5):
                    r = np.zeros(3)
                    r[j] = k * h
                    cols.append(np.asarray(table.b_vec(r)))
                out[:, j] = sum(c * v for c, v in zip(coef, cols)) / h
            return out

        table = j2problem.bounds(base)
        inv = j2problem.inverse_matrices(base)
        z = (16.0 * z_fd(table, 5e-4) - z_fd(table, 1e-3)) / 15.0
        m = np.asarray(table.a_matrix(np.zeros(3)))
        rel = (np.abs(inv.q - (z + m @ m))
               / np.maximum(np.abs(inv.q), 1e-30)).max()
        if rel >= 1e-9:
            failures.append("%s quadratic coefficient defect %r"
                            % (preset, rel))

        res = []
        for eps in (1e-3, 5e-4, 2.5e-4):
            cfg = config_for(preset, 3000.0, epsilon=eps)
            r = eps * n0
            defect = np.abs(j2problem.approx_inverse(cfg, r)
                            - j2problem.exact_inverse(cfg, r)).max()
            res.append(defect)
        for ratio in (res[0] / res[1], res[1] / res[2]):
            if not 6.0 < ratio < 10.0:
                failures.append("%s inverse residual ratio %r outside [6,10]"
                                % (preset, ratio))
    verdict(7, failures)


def test_criterion_8_envelope_dominance(verdict, runs):
    failures = []
    for preset in ("polar", "cosb"):
        artifacts = runs.n_operation(preset, 3000.0)
        l_curve = runs.l_operation(preset, 3000.0)
        cfg = config_for(preset, 3000.0)
        report = runner.compare(artifacts.estimator, l_curve, cfg)
        if not report.all_dominated:
            failures.append(
                "%s violated at t=%r orbits (max ratios %r)"
                % (preset, report.first_violation, list(report.max_ratio)))
        if not np.all(report.max_ratio > 0.0):
            failures.append("%s degenerate ratios" % preset)
    verdict(8, failures)


def test_criterion_9_cost_scaling(verdict, runs):
    failures = []
    short = runs.n_operation("polar", 3000.0)
    long = runs.n_operation("polar", 60000.0)
    if not long.hypotheses_ok:
        failures.append("60000-orbit run hypotheses failed")
    ratio = long.time_n / short.time_n
    if not ratio < 4.0:
        failures.append("wall ratio %r >= 4 (%.3fs vs %.3fs)"
                        % (ratio, long.time_n, short.time_n))
    verdict(9, failures)


def test_criterion_10_determinism(verdict, tmp_path):
    failures = []
    args = ["compare", "--preset", "polar", "--orbits", "3000"]
    dirs = (tmp_path / "one", tmp_path / "two")
    for d in dirs:
        if cli.main(args + ["--out-dir", str(d)]) != 0:
            failures.append("run into %s failed" % d.name)
    for name in ("estimator.csv", "comparison.csv"):
        if (dirs[0] / name).read_bytes() != (dirs[1] / name).read_bytes():
            failures.append("%s differs between runs" % name)
    verdict(10, failures)
