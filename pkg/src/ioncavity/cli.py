"""Command-line interface.

    ioncavity [--config PATH] [--json] [--out PATH] [--seed N] COMMAND [options]

Commands: trap-params, crystal, cavity, ions-in-mode, sweep, simulate, fit.
Every command builds one result dictionary which is printed either as JSON
(``--json``) or as an aligned table. Errors go to stderr as JSON with exit
code 2 (configuration/input) or 3 (infeasible, unconfined or unconverged).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ioncavity import cavity as cav
from ioncavity import crystal as cry
from ioncavity import trap
from ioncavity.config import ConfigError, ToolConfig, load_config, with_seed
from ioncavity.constants import TWO_PI
from ioncavity.fitting import DegenerateFitError, TimeSeries, fit_linear, fit_pzt_calibration, read_columns
from ioncavity.md import engine, io as mdio, observables as obs
from ioncavity.optimizer import NoFeasiblePointError, emit_report, sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3


def _species(cfg: ToolConfig, label: str | None):
    if label is None:
        return cfg.species
    if label not in cfg.species_table:
        raise ConfigError(f"unknown species {label!r}; known: {sorted(cfg.species_table)}", "--species")
    return cfg.species_table[label]


def _voltages(base: trap.DriveVoltages, args) -> trap.DriveVoltages:
    return trap.DriveVoltages(
        base.u_rf if args.u_rf is None else args.u_rf,
        base.u_end if args.u_end is None else args.u_end,
    )


def cmd_trap_params(cfg: ToolConfig, args) -> dict:
    ion = _species(cfg, args.species)
    v = _voltages(cfg.voltages, args)
    g = cfg.geometry
    wz = trap.axial_frequency(g, v, ion)
    wr = trap.radial_frequency(g, v, ion)
    q = trap.mathieu_q(g, v, ion)
    rho = trap.crystal_density(g, v, ion) if v.u_rf > 0 else 0.0
    return {
        "species": ion.isotope_label,
        "mass_kg": ion.mass,
        "isotope_shift_866_hz": ion.transition.isotope_shift,
        "u_rf_V": v.u_rf,
        "u_end_V": v.u_end,
        "omega_z_rad_s": wz,
        "f_z_hz": wz / TWO_PI,
        "omega_r_rad_s": wr,
        "f_r_hz": wr / TWO_PI,
        "mathieu_q": q.q,
        "q_flag": q.flag.value,
        "density_m3": rho,
        "density_cm3": rho * 1e-6,
    }


def _crystal_dict(c: cry.CrystalSpec) -> dict:
    return {
        "species": c.species.isotope_label,
        "ion_count": c.ion_count,
        "density_m3": c.density,
        "half_length_m": c.half_length,
        "total_length_m": c.length,
        "radius_m": c.radius,
        "aspect_ratio": c.aspect_ratio if c.radius > 0 else None,
    }


def cmd_crystal(cfg: ToolConfig, args) -> dict:
    ion = _species(cfg, args.species)
    v = _voltages(cfg.crystal.voltages, args)
    n = cfg.crystal.ion_count if args.ions is None else args.ions
    spec = cry.spheroid_from_count(cfg.geometry, v, ion, n)
    out = {"u_rf_V": v.u_rf, "u_end_V": v.u_end, **_crystal_dict(spec)}
    out["count_for_measured_length"] = cry.count_from_length(cfg.geometry, v, ion, cfg.crystal.total_length_m)
    out["measured_length_m"] = cfg.crystal.total_length_m
    if args.second_species:
        other = _species(cfg, args.second_species)
        tc = cry.two_component_structure(cfg.geometry, v, ion, other, n, args.second_count)
        out["two_component"] = {
            "inner_species": tc.inner_species.isotope_label,
            "outer_species": tc.outer_species.isotope_label,
            "inner_count": tc.inner_count,
            "outer_count": tc.outer_count,
            "inner_density_m3": tc.inner_density,
            "outer_density_m3": tc.outer_density,
            "boundary_radius_m": tc.boundary_radius,
            "half_length_m": tc.half_length,
            "radius_m": tc.radius,
            "consistent": tc.consistent,
        }
    return out


def cmd_cavity(cfg: ToolConfig, args) -> dict:
    c = cfg.cavity
    ion = _species(cfg, args.species)
    mode = cav.waist_from_geometry(c.spec)
    g0 = cav.single_ion_coupling(ion, mode)
    kappa = cav.cavity_decay_rate(c.linewidth_fwhm_hz)
    return {
        "fsr_from_length_hz": cav.free_spectral_range(c.spec),
        "length_from_measured_fsr_m": cav.length_from_fsr(c.fsr_hz),
        "finesse_from_linewidth": cav.finesse_from_linewidth(c.fsr_hz, c.linewidth_fwhm_hz),
        "finesse_from_losses": cav.finesse_from_losses(c.spec),
        "kappa_rad_s": kappa,
        "kappa_over_2pi_hz": kappa / TWO_PI,
        "waist_m": mode.waist,
        "rayleigh_range_m": mode.rayleigh_range,
        "mode_volume_m3": mode.mode_volume,
        "g0_rad_s": g0,
        "g0_over_2pi_hz": g0 / TWO_PI,
        "gamma_rad_s": ion.transition.gamma,
        "strong_coupling_threshold": cav.strong_coupling_threshold(ion.transition.gamma, kappa, g0),
    }


def _target_crystal(cfg: ToolConfig, args) -> cry.CrystalSpec:
    ion = _species(cfg, args.species)
    v = _voltages(cfg.crystal.voltages, args)
    n = cfg.crystal.ion_count if args.ions is None else args.ions
    if cfg.crystal.length_source == "model":
        return cry.spheroid_from_count(cfg.geometry, v, ion, n)
    rho = trap.crystal_density(cfg.geometry, v, ion)
    a = cfg.crystal.total_length_m / 2.0
    radius = math.sqrt(3.0 * n / (4.0 * math.pi * rho * a))
    return cry.CrystalSpec(n, rho, a, radius, ion)


def cmd_ions_in_mode(cfg: ToolConfig, args) -> dict:
    crystal = _target_crystal(cfg, args)
    mode = cav.waist_from_geometry(cfg.cavity.spec)
    ov = cav.ions_in_mode(crystal, mode, shape=args.shape)
    kappa = cav.cavity_decay_rate(cfg.cavity.linewidth_fwhm_hz)
    g0 = cav.single_ion_coupling(crystal.species, mode)
    threshold = cav.strong_coupling_threshold(crystal.species.transition.gamma, kappa, g0)
    return {
        "crystal": _crystal_dict(crystal),
        "length_source": cfg.crystal.length_source,
        "waist_m": mode.waist,
        "n_closed_form": ov.n_closed_form,
        "n_quadrature": ov.n_quadrature,
        "relative_difference": ov.relative_difference,
        "g_coll_rad_s": ov.collective_coupling,
        "g_coll_over_2pi_hz": ov.collective_coupling / TWO_PI,
        "radial_truncation_significant": ov.radial_truncation_significant,
        "strong_coupling_threshold": threshold,
        "strong_coupling": ov.n_closed_form >= threshold,
    }


def cmd_sweep(cfg: ToolConfig, args) -> dict:
    s = cfg.sweep
    result = sweep(
        s.u_rf_values(), s.u_end_values(), cfg.species, cfg.cavity.spec,
        constraint=s.constraint, n_total=s.n_total, geometry=cfg.geometry,
        linewidth_fwhm=cfg.cavity.linewidth_fwhm_hz,
    )
    csv_path = json_path = None
    if args.out:
        out = Path(args.out)
        csv_path, json_path = out.with_suffix(".csv"), out.with_suffix(".json")
    _, summary = emit_report(result, csv_path, json_path)
    summary["best_per_u_rf"] = [None if np.isnan(x) else float(x) for x in result.best_per_u_rf()]
    return summary


def cmd_simulate(cfg: ToolConfig, args) -> dict:
    md = cfg.md
    if args.ions is not None:
        md = replace(md, ion_counts=(args.ions,) + md.ion_counts[1:])
    if args.mode == "relax":
        final, mean_pos, _ = engine.secular_averages(engine.relax_to_crystal(md), md)
        rec_pos = rec_vel = times = None
    else:
        state = engine.initial_state(md)
        record_every = cfg.md_record_every or max(1, md.n_steps // 1000)
        final, rec_pos, rec_vel = engine.run(state, md, md.n_steps, record_every=record_every)
        times = state.time + md.timestep * record_every * (np.arange(len(rec_pos)) + 1)
        mean_pos = final.positions
    masses = np.array([s.mass for s in md.species])[final.species_index]
    temps = obs.kinetic_temperatures(final.velocities, masses, final.species_index)
    out = {
        "mode": args.mode,
        "n_ions": final.n_ions,
        "time_s": final.time,
        "seed": md.seed,
        "kinetic_temperature_k": temps["total"],
        "energy_j": engine.energy(final, md),
    }
    if final.n_ions == 2:
        out["spacing_m"] = float(np.linalg.norm(mean_pos[0] - mean_pos[1]))
    if final.n_ions >= 4:
        fit = obs.ellipsoid_fit(mean_pos)
        out.update({
            "fit_half_length_m": fit.half_length,
            "fit_radius_m": fit.radius,
            "fit_density_m3": fit.density,
            "model_density_m3": trap.crystal_density(md.geometry, md.voltages, md.species[0]),
        })
    if len(md.species) > 1:
        rs = obs.radial_histograms(mean_pos, final.species_index)
        out["mean_radius_m"] = {md.species[k].isotope_label: v for k, v in rs.mean_radius.items()}
        out["boundary_radius_m"] = rs.boundary_radius
    if args.out:
        path = Path(args.out)
        if rec_pos is None:
            mdio.write_snapshot_csv(path, final.species_index, mean_pos)
        elif path.suffix == ".npz":
            mdio.write_trajectory_npz(path, times, final.species_index, rec_pos, rec_vel)
        else:
            mdio.write_trajectory_csv(path, times, final.species_index, rec_pos, rec_vel)
        out["output"] = str(path)
    return out


def cmd_fit(cfg: ToolConfig, args) -> dict:
    if args.kind == "pzt":
        volts, detuning, sigma = read_columns(args.input)
        res = fit_pzt_calibration(volts, detuning, sigma, weighted=args.weighted)
        n_points = len(volts)
    else:
        series = TimeSeries.from_csv(args.input)
        res = fit_linear(series, weighted=args.weighted)
        n_points = len(series)
    return {
        "kind": args.kind,
        "n_points": n_points,
        "slope": res.slope,
        "slope_err": res.slope_err,
        "intercept": res.intercept,
        "intercept_err": res.intercept_err,
        "chi2": res.chi2,
        "dof": res.dof,
        "weighted": res.weighted,
    }


COMMANDS = {
    "trap-params": cmd_trap_params,
    "crystal": cmd_crystal,
    "cavity": cmd_cavity,
    "ions-in-mode": cmd_ions_in_mode,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
}


def _flatten(d, prefix=""):
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _flatten(v, key + ".")
        elif isinstance(v, list) and len(v) > 6:
            yield key, f"[{len(v)} values]"
        else:
            yield key, v


def format_table(result: dict) -> str:
    rows = list(_flatten(result))
    width = max((len(k) for k, _ in rows), default=0)
    lines = []
    for k, v in rows:
        if isinstance(v, float):
            v = f"{v:.6g}"
        lines.append(f"{k:<{width}}  {v}")
    return "\n".join(lines)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ioncavity", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="TOML configuration file")
    ap.add_argument("--json", action="store_true", help="machine-readable JSON output")
    ap.add_argument("--out", help="output file (sweep: path prefix for .csv/.json; simulate: trajectory or snapshot)")
    ap.add_argument("--seed", type=int, help="RNG seed for simulate")
    sub = ap.add_subparsers(dest="command", required=True)

    def voltage_flags(p):
        p.add_argument("--u-rf", type=float, help="rf amplitude (V)")
        p.add_argument("--u-end", type=float, help="end-electrode voltage (V)")
        p.add_argument("--species", help="species label, e.g. 44Ca+")

    voltage_flags(sub.add_parser("trap-params", help="secular frequencies, q, density"))
    p = sub.add_parser("crystal", help="cold-fluid crystal shape")
    voltage_flags(p)
    p.add_argument("--ions", type=float, help="ion count")
    p.add_argument("--second-species", help="second species for a two-component crystal")
    p.add_argument("--second-count", type=float, default=0.0)
    p = sub.add_parser("cavity", help="FSR, finesse, kappa, waist, g0")
    p.add_argument("--species")
    p = sub.add_parser("ions-in-mode", help="ions in the cavity mode and collective coupling")
    voltage_flags(p)
    p.add_argument("--ions", type=float)
    p.add_argument("--shape", choices=["cylinder", "spheroid"], default="cylinder")
    sub.add_parser("sweep", help="optimize ions in mode over (U_rf, U_end)")
    p = sub.add_parser("simulate", help="molecular dynamics")
    p.add_argument("--mode", choices=["relax", "run"], default="relax")
    p.add_argument("--ions", type=int, help="count of the first MD species")
    p = sub.add_parser("fit", help="linear fit of a t_s,value[,sigma] CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--kind", choices=["loading", "pzt"], default="loading")
    p.add_argument("--weighted", action="store_true")
    return ap


def _fail(payload: dict, code: int) -> int:
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = with_seed(cfg, args.seed)
        result = _jsonable(COMMANDS[args.command](cfg, args))
    except ConfigError as exc:
        return _fail(exc.to_dict(), EXIT_CONFIG)
    except NoFeasiblePointError as exc:
        return _fail(exc.to_dict(), EXIT_INFEASIBLE)
    except (
        trap.RadiallyDeconfinedError,
        cry.ExtremeAnisotropyError,
        cry.NoSeparationError,
        cav.UnstableResonatorError,
        engine.SimulationError,
    ) as exc:
        return _fail({"error": {"type": type(exc).__name__, "message": str(exc)}}, EXIT_INFEASIBLE)
    except (OSError, ValueError, DegenerateFitError) as exc:
        return _fail({"error": {"type": type(exc).__name__, "message": str(exc)}}, EXIT_CONFIG)

    if args.json:
        print(json.dumps(result, indent=2))
    else:
        print(format_table(result))
    if args.out and args.command not in ("sweep", "simulate"):
        Path(args.out).write_text(json.dumps(result, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
