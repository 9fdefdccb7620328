"""Command-line entry point: ``macrocoh <command> --preset NAME | --config PATH``."""

from __future__ import annotations

import argparse
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import density_scan, thresholds
from .bloch import solve_bloch
from .config import Pipeline, available_presets, build, load_config, load_preset, parse_config
from .core import ConfigError, NumericalError, validate_cpr_conditions
from .io import FORMATS, RunManifest, run_identifier, write_columns, write_grids, write_trajectory
from .propagation import run_propagation, saturation_distance
from .transverse import beam_scale, default_jobs, regrid_xy, run_transverse
from .trigger import fluence_profile, gaussian_beam_area, photons_from_fluence, solve_trigger

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def _pipeline(args) -> Pipeline:
    if (args.config is None) == (args.preset is None):
        raise ConfigError("give exactly one of --config PATH or --preset NAME")
    cfg = load_config(args.config) if args.config else load_preset(args.preset)
    if args.z_stride is not None:
        data = cfg.model_dump(mode="json")
        data["grid"]["z_stride"] = args.z_stride
        cfg = parse_config(data)
    return build(cfg)


def _manifest(args, pipe: Pipeline, extra: dict | None = None) -> RunManifest:
    snapshot = pipe.config.model_dump(mode="json")
    command = {"name": args.command, "format": args.format, **(extra or {})}
    run_id = run_identifier(snapshot, command)
    out = Path(args.out) if args.out else Path("macrocoh-out") / f"{args.command}-{run_id}"
    out.mkdir(parents=True, exist_ok=True)
    m = RunManifest(run_id, command, snapshot, out)
    if pipe.grid is not None:
        g = pipe.grid
        m.grid = {"t_min_ns": g.t_min, "t_max_ns": g.t_max, "n_t": g.n_t, "dt_ns": g.dt,
                  "dz_um": g.dz, "n_z": g.n_z, "z_stride": pipe.z_stride, "method": pipe.method}
    return m


def _print_report(pipe: Pipeline) -> None:
    for line in validate_cpr_conditions(pipe.pump, pipe.stokes).lines():
        print(line)


def _params(pipe: Pipeline) -> str:
    p, s = pipe.pump, pipe.stokes
    return (f"omega0_p={p.omega0} tau_p={p.tau} delta_p={p.detuning} omega0_s={s.omega0} "
            f"tau_s={s.tau} delta_s={s.detuning} t_center={p.t_center} n_t={pipe.grid.n_t} "
            f"window=[{pipe.grid.t_min}, {pipe.grid.t_max}] method={pipe.method}")


def cmd_bloch(args) -> RunManifest:
    pipe = _pipeline(args)
    pipe.require("pulses")
    _print_report(pipe)
    m = _manifest(args, pipe)
    traj = solve_bloch(pipe.pump, pipe.stokes, pipe.grid, pipe.initial,
                       check_convergence=True, tolerance=pipe.tolerance, method=pipe.method)
    write_trajectory(m.out_dir / "trajectory.txt", m, traj, _params(pipe))
    pops = traj.populations
    r13 = np.abs(traj.states[:, 0, 2])
    m.invariants = {
        "trace_error": traj.trace_error(),
        "hermiticity_error": traj.hermiticity_error(),
        "purity_drift": traj.purity_drift(),
        "min_eigenvalue": traj.min_eigenvalue(),
    }
    m.summary = {
        "min_rho11": float(pops[:, 0].min()),
        "max_rho33": float(pops[:, 2].max()),
        "max_abs_rho13": float(r13.max()),
        "final_rho11": float(pops[-1, 0]),
        "cpr_conditions_pass": validate_cpr_conditions(pipe.pump, pipe.stokes).passed,
    }
    return m


def _propagate(pipe: Pipeline):
    pipe.require("medium", "pulses")
    return run_propagation(
        pipe.pump, pipe.stokes, pipe.scheme, pipe.medium, pipe.grid, pipe.constants,
        z_stride=pipe.z_stride, initial=pipe.initial, tolerance=pipe.tolerance, method=pipe.method,
    )


def _propagation_invariants(fields, cmap) -> dict:
    energy = fields.pulse_energy()
    return {
        "trace_error": cmap.diagnostics["trace_error"],
        "hermiticity_error": cmap.diagnostics["hermiticity_error"],
        "purity_drift": cmap.diagnostics["purity_drift"],
        "max_abs_rho13": float(cmap.peak.max()),
        "energy_ratio_max": float(np.max(energy / energy[0])) if energy[0] > 0 else 1.0,
        "fields_finite": bool(np.all(np.isfinite(fields.omega_p)) and np.all(np.isfinite(fields.omega_s))),
    }


def cmd_propagate(args) -> RunManifest:
    pipe = _pipeline(args)
    pipe.require("medium", "pulses")
    _print_report(pipe)
    m = _manifest(args, pipe)
    fields, cmap = _propagate(pipe)
    write_grids(m.out_dir, "fields", m, args.format, fields.z_values, fields.t_values,
                {"omega_p": fields.omega_p, "omega_s": fields.omega_s, "rho13": cmap.rho13})
    p = m.out_dir / "peak_coherence.txt"
    write_columns(p, m, ["z_um", "max_abs_rho13", "trace_error", "purity_drift"],
                  [cmap.peak_z, cmap.peak, cmap.diagnostics["trace_error_by_z"],
                   cmap.diagnostics["purity_drift_by_z"]])
    m.add(p, "max_t |rho13| and invariant errors at every z step")
    m.invariants = _propagation_invariants(fields, cmap)
    m.summary = {
        "saturation_distance_um": saturation_distance(cmap, pipe.threshold),
        "saturation_threshold": pipe.threshold,
        "c_p_per_um_ns": cmap.diagnostics["c_p"],
        "c_s_per_um_ns": cmap.diagnostics["c_s"],
    }
    print(f"saturation distance: {m.summary['saturation_distance_um']:.6g} um")
    return m


def _beam_area(pipe: Pipeline) -> float | None:
    if pipe.transverse is None:
        return None
    return gaussian_beam_area(pipe.transverse.fwhm, pipe.transverse.profile)


def cmd_trigger(args) -> RunManifest:
    pipe = _pipeline(args)
    pipe.require("medium", "pulses", "pulses.trigger")
    _print_report(pipe)
    m = _manifest(args, pipe)
    fields, cmap = _propagate(pipe)
    gen = solve_trigger(cmap, pipe.trigger, pipe.scheme, pipe.medium, pipe.grid, pipe.constants)
    write_grids(m.out_dir, "generated", m, args.format, gen.z_values, gen.t_values,
                {"omega_t": gen.omega_t, "omega_g": gen.omega_g})
    fl = fluence_profile(gen, pipe.scheme, pipe.constants)
    per_mm2 = photons_from_fluence(fl, 1e-6, gen.generated_photon_energy, pipe.constants)
    p = m.out_dir / "fluence.txt"
    write_columns(p, m, ["z_um", "fluence_J_per_m2", "photons_per_mm2"], [gen.z_values, fl, per_mm2])
    m.add(p, "generated-field fluence at every stored z")
    k = int(np.argmax(fl))
    m.invariants = {**_propagation_invariants(fields, cmap), "manley_rowe_error": gen.manley_rowe_error}
    m.summary = {
        "xi_t_per_um": gen.xi_t,
        "xi_g_per_um": gen.xi_g,
        "trigger_detuning_per_ns": pipe.trigger.detuning(pipe.scheme, pipe.constants),
        "max_fluence_J_per_m2": float(fl[k]),
        "z_of_max_fluence_um": float(gen.z_values[k]),
        "photons_per_mm2": float(per_mm2[k]),
        "peak_generated_intensity_per_ns2": gen.peak_generated_intensity(),
        # SI peak intensity I = c eps0 / 2 (hbar W_g / mu12)^2
        "peak_generated_intensity_W_per_m2": float(
            0.5 * pipe.constants.c * pipe.constants.epsilon0
            * (pipe.constants.hbar * 1e9 / pipe.scheme.mu12_si) ** 2 * gen.peak_generated_intensity()
        ),
    }
    area = _beam_area(pipe)
    if area is not None:
        m.summary["beam_area_mm2"] = area
        m.summary["photons"] = float(per_mm2[k] * area)
        print(f"photons per shot (beam area {area:.4g} mm^2): {m.summary['photons']:.4g}")
    print(f"peak fluence {fl[k]:.4g} J/m^2 at z = {gen.z_values[k]:.6g} um")
    return m


def cmd_transverse(args) -> RunManifest:
    pipe = _pipeline(args)
    pipe.require("medium", "pulses", "transverse")
    _print_report(pipe)
    m = _manifest(args, pipe, {"xy_points": args.xy_points})
    tg = pipe.transverse
    res = run_transverse(
        pipe.pump, pipe.stokes, pipe.trigger, pipe.scheme, pipe.medium, pipe.grid, tg,
        pipe.constants, pipe.z_stride, pipe.initial, args.jobs or default_jobs(),
        pipe.method, pipe.tolerance, pipe.threshold,
    )
    idx = np.rint(res.z_stored / pipe.grid.dz).astype(int)
    maps = {"peak_coherence": res.peak[:, idx], "coherence_t_center": res.center}
    if res.fluence is not None:
        maps["fluence_J_per_m2"] = res.fluence
    for name, values in maps.items():
        p = m.out_dir / f"{name}_rz.txt"
        np_rows = res.rz_table(values, res.z_stored)
        write_columns(p, m, ["r_mm", "z_um", name], np_rows.T)
        m.add(p, f"{name} on (r, stored z)")
    p = m.out_dir / "samples.txt"
    scale = beam_scale(tg.radii, tg.fwhm)
    write_columns(p, m, ["r_mm", "beam_scale", "amplitude_factor", "weight_mm2", "saturation_um", "max_peak_coherence"],
                  [tg.radii, scale, tg.amplitude_factors(), tg.weights, res.saturation, res.peak.max(axis=1)])
    m.add(p, "per-sample summary")
    if args.xy_points:
        x = np.linspace(-tg.radii[-1], tg.radii[-1], args.xy_points)
        for name, values in (("peak_coherence", res.peak.max(axis=1)),) + (
            (("fluence_J_per_m2", res.fluence.max(axis=1)),) if res.fluence is not None else ()
        ):
            xy = regrid_xy(tg.radii, values, x, x)
            xx, yy = np.meshgrid(x, x)
            p = m.out_dir / f"{name}_xy.txt"
            write_columns(p, m, ["x_mm", "y_mm", name], [xx.ravel(), yy.ravel(), xy.ravel()],
                          "value: maximum over z")
            m.add(p, f"{name} regridded on an (x, y) raster")
    z_half = 0.5 * res.saturation[0]
    strong = scale >= 0.3
    m.invariants = {
        k: max(d[k] for d in res.diagnostics) for k in res.diagnostics[0]
    }
    m.summary = {
        "on_axis_saturation_um": float(res.saturation[0]),
        "min_peak_coherence_beam_scale_ge_0.3": float(res.peak_coherence(z_half)[strong].min()),
        "profile": tg.profile,
    }
    if res.fluence is not None:
        m.summary["photons"] = res.photon_yield(pipe.constants)
        print(f"photons per shot: {m.summary['photons']:.4g}")
    return m


def cmd_scan(args) -> RunManifest:
    pipe = _pipeline(args)
    pipe.require("medium", "pulses", "scan")
    m = _manifest(args, pipe)
    result = density_scan(pipe.scan_setup(), pipe.config.scan.densities_per_um3, args.jobs or default_jobs())
    fit = result.fit
    n = [e.density for e in result.entries]
    p = m.out_dir / "scan.txt"
    write_columns(
        p, m, ["N_per_um3", "sat_distance_um", "peak_intensity_per_ns2", "C_fit", "residual"],
        [n, [e.saturation_distance for e in result.entries], [e.peak_intensity for e in result.entries],
         [fit.constant] * len(n), [e.saturation_distance * e.density / fit.constant - 1 for e in result.entries]],
        "peak_intensity is max |W_g|^2 over (z, t); residual is d N / C - 1",
    )
    m.add(p, "density scan table")
    m.summary = {
        "fitted_constant": fit.constant,
        "max_relative_residual": fit.max_residual,
        "consistent_with_inverse_law": fit.consistent,
        "free_slope": fit.slope,
        "points": [{"density": e.density, "saturation_distance_um": e.saturation_distance,
                    "peak_intensity_per_ns2": e.peak_intensity, "invariants": e.diagnostics}
                   for e in result.entries],
    }
    m.invariants = {k: max(e.diagnostics[k] for e in result.entries) for k in result.entries[0].diagnostics}
    print(f"C = {fit.constant:.6g} um^-2 (max residual {fit.max_residual:.3g}, free slope {fit.slope:.4f})")
    return m


def cmd_thresholds(args) -> RunManifest:
    pipe = _pipeline(args)
    pipe.require("thresholds")
    q = pipe.threshold_query()
    m = _manifest(args, pipe)
    rows = thresholds(q)
    p = m.out_dir / "thresholds.txt"
    write_columns(p, m, ["i", "j", "mass_sum_ev", "photon_energy_ev"],
                  [[t.i for t in rows], [t.j for t in rows], [t.mass_sum for t in rows], [t.energy for t in rows]],
                  f"e31_ev: {q.e31!r}")
    m.add(p, "RENP photon-energy thresholds")
    m.summary = {"e31_ev": q.e31, "thresholds": [t.__dict__ for t in rows]}
    for t in rows:
        print(f"({t.i},{t.j})  m_i+m_j = {t.mass_sum:.6g} eV  E_gamma = {t.energy:.12g} eV")
    return m


COMMANDS = {
    "bloch": (cmd_bloch, "solve the three-level Bloch equations"),
    "propagate": (cmd_propagate, "propagate Pump/Stokes through the medium"),
    "trigger": (cmd_trigger, "propagate, then solve the triggered two-photon emission"),
    "transverse": (cmd_transverse, "sweep over a transverse Gaussian beam profile"),
    "scan": (cmd_scan, "density scan with the 1/N saturation fit"),
    "thresholds": (cmd_thresholds, "RENP photon-energy thresholds"),
}


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--config", metavar="PATH", help="JSON run configuration")
    src.add_argument("--preset", metavar="NAME", help="shipped preset (see `macrocoh presets`)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--format", choices=FORMATS, default="columns", help="grid export format")
    common.add_argument("--jobs", type=int, default=None, metavar="N", help="worker processes")
    common.add_argument("--z-stride", type=int, default=None, metavar="K", help="store every K-th z slice")

    parser = argparse.ArgumentParser(prog="macrocoh", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "transverse":
            p.add_argument("--xy-points", type=int, default=0, metavar="N",
                           help="also write N x N raster maps")
    sub.add_parser("presets", help="list shipped presets")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    if args.command == "presets":
        print("\n".join(available_presets()))
        return EXIT_OK
    if args.jobs is not None and args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.z_stride is not None and args.z_stride < 1:
        print("error: --z-stride must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    func = COMMANDS[args.command][0]
    start = time.perf_counter()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            m = func(args)
        m.duration_s = time.perf_counter() - start
        path = m.write()
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:  # ConfigError and the analysis errors
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"run {m.run_id}: manifest {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
