"""Command-line front end.

Subcommands: estimate (envelope pipeline), validate (direct error
integration), compare (both plus the dominance report), elements
(orbit-geometry conversions), preset (print the bundled example
configurations).  Every run that writes files also writes a manifest
echoing the effective configuration; wall-clock timings go to a
separate file so repeated runs with the same configuration produce
bit-identical data files.

Exit status: 0 on success, 1 on numerical failure, 2 on usage errors.
"""

import argparse
import os
import sys

import numpy as np

from . import __version__, averaging, j2problem, kepler, numerics, runner
from . import _kernels as kernels

# example configurations; both orbit the Earth model
PRESETS = {
    "polar": {"p0": 3.000, "e0": 0.6640, "y0": 0.0000,
              "epsilon": kepler.EARTH.epsilon},
    "cosb": {"p0": 1.973, "e0": 0.8817, "y0": 0.9600,
             "epsilon": kepler.EARTH.epsilon},
}

_CONFIG_KEYS = {
    "p0": float, "e0": float, "y0": float, "epsilon": float,
    "orbits": float, "theta_grid": int, "tau_grid": int,
    "rk_abs_tol": float, "rk_rel_tol": float,
    "est_abs_tol": float, "est_rel_tol": float,
    "l_abs_tol": float, "l_rel_tol": float, "l_max_steps": int,
    "inverse_mode": str, "interp_mode": str, "sample_count": int,
    "grid_count": int, "slack": float, "out_dir": str, "preset": str,
}

_DEFAULTS = {
    "orbits": 3000.0, "theta_grid": 30, "tau_grid": 100,
    "est_abs_tol": 1e-8, "est_rel_tol": 1e-8,
    "l_abs_tol": 1e-10, "l_rel_tol": 1e-10, "l_max_steps": 20_000_000,
    "inverse_mode": "approx", "interp_mode": "cubic",
    "sample_count": 512, "grid_count": 2048, "slack": 0.0,
    "out_dir": ".",
}

_NUMERICAL_ERRORS = (
    numerics.IntegrationError,
    numerics.QuadratureError,
    averaging.EstimatorBlowup,
    averaging.SingularFundamentalMatrix,
    j2problem.CapViolation,
    kepler.DomainError,
)


def _fmt(value):
    """Shortest round-trip text for floats; plain text otherwise."""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_csv(path, header, columns):
    """Write UTF-8, LF-terminated CSV with round-trip float fields."""
    columns = [np.asarray(col) for col in columns]
    if len(columns) != len(header):
        raise ValueError("header and column count differ")
    length = len(columns[0])
    if any(len(col) != length for col in columns) or length == 0:
        raise ValueError("columns must be nonempty and equally long")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(length):
            fh.write(",".join(_fmt(float(col[i])) for col in columns))
            fh.write("\n")


def read_csv(path):
    """Inverse of emit_csv: (header, columns of float arrays)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:] if line]
    columns = [np.array([float(row[j]) for row in rows])
               for j in range(len(header))]
    return header, columns


def _write_manifest(path, settings):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key in sorted(settings):
            fh.write("%s=%s\n" % (key, _fmt(settings[key])))


def _read_config_file(path):
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError("config line %r is not key=value" % line)
            key, _, text = line.partition("=")
            key = key.strip()
            if key not in _CONFIG_KEYS:
                raise ValueError("unknown config key %r" % key)
            values[key] = _CONFIG_KEYS[key](text.strip())
    return values


def _add_common(sub):
    sub.add_argument("--preset", choices=sorted(PRESETS))
    sub.add_argument("--config", help="key=value file; flags override it")
    sub.add_argument("--p0", type=float)
    sub.add_argument("--e0", type=float)
    sub.add_argument("--y0", type=float)
    sub.add_argument("--epsilon", type=float)
    sub.add_argument("--orbits", type=float)
    sub.add_argument("--theta-grid", type=int, dest="theta_grid")
    sub.add_argument("--tau-grid", type=int, dest="tau_grid")
    sub.add_argument("--rk-abs-tol", type=float, dest="rk_abs_tol",
                     help="tolerance of the subcommand's main integration")
    sub.add_argument("--rk-rel-tol", type=float, dest="rk_rel_tol")
    sub.add_argument("--est-abs-tol", type=float, dest="est_abs_tol")
    sub.add_argument("--est-rel-tol", type=float, dest="est_rel_tol")
    sub.add_argument("--l-abs-tol", type=float, dest="l_abs_tol")
    sub.add_argument("--l-rel-tol", type=float, dest="l_rel_tol")
    sub.add_argument("--l-max-steps", type=int, dest="l_max_steps")
    sub.add_argument("--inverse-mode", choices=["approx", "exact"],
                     dest="inverse_mode")
    sub.add_argument("--interp-mode", choices=["lagrange", "cubic"],
                     dest="interp_mode")
    sub.add_argument("--sample-count", type=int, dest="sample_count")
    sub.add_argument("--grid-count", type=int, dest="grid_count")
    sub.add_argument("--slack", type=float)
    sub.add_argument("--out-dir", dest="out_dir")


def _parser():
    parser = argparse.ArgumentParser(
        prog="polarj2",
        description="Averaging-error envelopes for polar J2 satellite "
                    "motion")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)
    for name, text in (
            ("estimate", "run the envelope pipeline"),
            ("validate", "integrate the rescaled error directly"),
            ("compare", "run both operations and check dominance")):
        sub = subs.add_parser(name, help=text)
        _add_common(sub)
    elems = subs.add_parser("elements", help="orbit geometry conversions")
    elems.add_argument("--preset", choices=sorted(PRESETS))
    elems.add_argument("--p0", type=float)
    elems.add_argument("--e0", type=float)
    elems.add_argument("--y0", type=float, default=0.0)
    elems.add_argument("--theta", type=float, default=0.0)
    elems.add_argument("--rho-apo", type=float, dest="rho_apo",
                       help="apoapsis radius in meters")
    elems.add_argument("--rho-peri", type=float, dest="rho_peri",
                       help="periapsis radius in meters")
    pre = subs.add_parser("preset", help="print a bundled configuration")
    pre.add_argument("name", choices=sorted(PRESETS))
    return parser


def _settings_from(args):
    """Resolve defaults < preset < config file < explicit flags."""
    file_values = {}
    if args.config:
        file_values = _read_config_file(args.config)
    preset = args.preset or file_values.get("preset")
    settings = dict(_DEFAULTS)
    if preset:
        if preset not in PRESETS:
            raise ValueError("unknown preset %r" % preset)
        settings.update(PRESETS[preset])
    settings.update({k: v for k, v in file_values.items() if k != "preset"})
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None and key != "preset":
            settings[key] = value
    settings["preset"] = preset or "custom"
    missing = [k for k in ("p0", "e0", "y0", "epsilon")
               if k not in settings]
    if missing:
        raise ValueError("missing initial data: %s (give --preset or %s)"
                         % (", ".join(missing),
                            ", ".join("--" + m for m in missing)))
    # the generic rk pair steers whichever integration the subcommand
    # runs directly: the estimator for estimate, the error system for
    # validate and compare
    if settings.get("rk_abs_tol") is not None:
        target = "est" if args.command == "estimate" else "l"
        settings["%s_abs_tol" % target] = settings["rk_abs_tol"]
    if settings.get("rk_rel_tol") is not None:
        target = "est" if args.command == "estimate" else "l"
        settings["%s_rel_tol" % target] = settings["rk_rel_tol"]
    settings.pop("rk_abs_tol", None)
    settings.pop("rk_rel_tol", None)
    return settings


def _config_from(settings):
    return j2problem.J2Config.from_orbits(
        p0=settings["p0"], e0=settings["e0"], y0=settings["y0"],
        epsilon=settings["epsilon"], orbits=settings["orbits"],
        theta_grid=settings["theta_grid"], tau_grid=settings["tau_grid"],
        est_abs_tol=settings["est_abs_tol"],
        est_rel_tol=settings["est_rel_tol"],
        l_abs_tol=settings["l_abs_tol"], l_rel_tol=settings["l_rel_tol"],
        l_max_steps=settings["l_max_steps"],
        inverse_mode=settings["inverse_mode"],
        interp_mode=settings["interp_mode"],
        sample_count=settings["sample_count"])


def _manifest_settings(settings, command):
    out = dict(settings)
    out["command"] = command
    out["backend"] = kernels.BACKEND
    out["version"] = __version__
    return out


def _write_timings(path, **timings):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key in sorted(timings):
            fh.write("%s=%s\n" % (key, _fmt(timings[key])))


def _emit_estimator_csv(out_dir, est):
    path = os.path.join(out_dir, "estimator.csv")
    emit_csv(path,
             ["tau", "n_P", "n_E", "n_Y", "m_P", "m_E", "m_Y"],
             [est.taus,
              est.n_values[:, 0], est.n_values[:, 1], est.n_values[:, 2],
              est.m_values[:, 0], est.m_values[:, 1], est.m_values[:, 2]])
    return path


def _emit_comparison_csv(out_dir, report):
    path = os.path.join(out_dir, "comparison.csv")
    emit_csv(path,
             ["t_orbits", "absL_P", "envelope_P", "absL_E", "envelope_E",
              "absL_Y", "envelope_Y"],
             [report.t_orbits,
              report.abs_l[:, 0], report.envelopes[:, 0],
              report.abs_l[:, 1], report.envelopes[:, 1],
              report.abs_l[:, 2], report.envelopes[:, 2]])
    return path


def _emit_l_csv(out_dir, l_curve, grid_count):
    path = os.path.join(out_dir, "validation.csv")
    ts = np.linspace(l_curve.t0, l_curve.t1, grid_count)
    vals = np.asarray(l_curve(ts), dtype=float)
    emit_csv(path, ["t_orbits", "L_P", "L_E", "L_Y"],
             [ts, vals[:, 0], vals[:, 1], vals[:, 2]])
    return path


def _print_fixed_point(fp):
    print("l0 = (%s, %s, %s)" % tuple(_fmt(float(v)) for v in fp.l0))
    print("fixed-point residual = %s after %d iterations"
          % (_fmt(fp.residual), fp.iterations))
    print("eps * contraction = %s" % _fmt(fp.eps_contraction))
    print("hypotheses: %s"
          % ", ".join("%s=%s" % (k, v) for k, v in sorted(fp.flags.items())))


def _cmd_estimate(args):
    settings = _settings_from(args)
    config = _config_from(settings)
    out_dir = settings["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    artifacts = runner.run_n_operation(config)
    est = artifacts.estimator
    path = _emit_estimator_csv(out_dir, est)
    _write_manifest(os.path.join(out_dir, "manifest.txt"),
                    _manifest_settings(settings, "estimate"))
    _write_timings(os.path.join(out_dir, "timings.txt"),
                   time_n=artifacts.time_n)
    _print_fixed_point(artifacts.fixed_point)
    print("envelope margins: %s"
          % ", ".join("%s=%s" % (k, _fmt(v))
                      for k, v in sorted(est.margins.items())))
    print("estimator backend: %s" % artifacts.estimator_backend)
    print("wrote %s" % path)
    return 0


def _cmd_validate(args):
    settings = _settings_from(args)
    config = _config_from(settings)
    out_dir = settings["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    import time as _time
    start = _time.perf_counter()
    l_curve = runner.run_l_operation(config)
    elapsed = _time.perf_counter() - start
    path = _emit_l_csv(out_dir, l_curve, settings["grid_count"])
    _write_manifest(os.path.join(out_dir, "manifest.txt"),
                    _manifest_settings(settings, "validate"))
    _write_timings(os.path.join(out_dir, "timings.txt"), time_l=elapsed)
    print("integrated %d accepted steps, %d field evaluations"
          % (len(l_curve.nodes) - 1, l_curve.nfev))
    print("wrote %s" % path)
    return 0


def _cmd_compare(args):
    settings = _settings_from(args)
    config = _config_from(settings)
    out_dir = settings["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    artifacts, report = runner.run_compare(config,
                                           grid_count=settings["grid_count"],
                                           slack=settings["slack"])
    est_path = _emit_estimator_csv(out_dir, artifacts.estimator)
    cmp_path = _emit_comparison_csv(out_dir, report)
    _write_manifest(os.path.join(out_dir, "manifest.txt"),
                    _manifest_settings(settings, "compare"))
    _write_timings(os.path.join(out_dir, "timings.txt"),
                   time_n=artifacts.time_n, time_l=artifacts.time_l)
    _print_fixed_point(artifacts.fixed_point)
    for i, name in enumerate("PEY"):
        print("component %s: dominance %s, max |L|/n = %s"
              % (name, bool(report.dominance[i]),
                 _fmt(float(report.max_ratio[i]))))
    if report.first_violation is not None:
        print("first violation at t = %s orbits"
              % _fmt(report.first_violation))
    print("dominance %s over %d checked samples"
          % ("holds" if report.all_dominated else "FAILS",
             report.checked_samples))
    print("wrote %s and %s" % (est_path, cmp_path))
    return 0


def _cmd_elements(args):
    if args.rho_apo is not None or args.rho_peri is not None:
        if args.rho_apo is None or args.rho_peri is None:
            raise ValueError("need both --rho-apo and --rho-peri")
        p, e = kepler.elements_from_apsides(args.rho_apo, args.rho_peri,
                                            kepler.EARTH)
    else:
        preset = PRESETS.get(args.preset) if args.preset else None
        p = args.p0 if args.p0 is not None else (
            preset["p0"] if preset else None)
        e = args.e0 if args.e0 is not None else (
            preset["e0"] if preset else None)
        if p is None or e is None:
            raise ValueError("give --p0/--e0, --preset, or apsidal radii")
    geom = kepler.apsides_and_period(p, e, kepler.EARTH)
    print("p=%s" % _fmt(float(p)))
    print("e=%s" % _fmt(float(e)))
    print("rho_apo_m=%s" % _fmt(geom.rho_apo))
    print("rho_peri_m=%s" % _fmt(geom.rho_peri))
    print("period_s=%s" % _fmt(geom.period))
    print("period_h=%s" % _fmt(geom.period / 3600.0))
    state = kepler.state_from_elements(
        kepler.KeplerElements(p=p, e=e, y=args.y0, theta=args.theta),
        kepler.EARTH)
    print("rho_m=%s" % _fmt(state.rho))
    print("rho_dot_mps=%s" % _fmt(state.rho_dot))
    print("theta_dot_radps=%s" % _fmt(state.theta_dot))
    return 0


def _cmd_preset(args):
    values = PRESETS[args.name]
    for key in sorted(values):
        print("%s=%s" % (key, _fmt(values[key])))
    print("gm=%s" % _fmt(kepler.EARTH.gm))
    print("radius=%s" % _fmt(kepler.EARTH.radius))
    return 0


_COMMANDS = {
    "estimate": _cmd_estimate,
    "validate": _cmd_validate,
    "compare": _cmd_compare,
    "elements": _cmd_elements,
    "preset": _cmd_preset,
}


def main(argv=None):
    parser = _parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except _NUMERICAL_ERRORS as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        parser.exit(2, "%s: error: %s\n" % (parser.prog, exc))


if __name__ == "__main__":
    sys.exit(main())
