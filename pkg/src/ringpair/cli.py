"""Command-line experiments: each subcommand runs one study end to end and
writes plot-ready CSV/JSON artifacts plus a manifest into the output directory.

Outputs are deterministic for a fixed seed and configuration: no timestamps,
sorted JSON keys, fixed float formatting.

Exit codes: 0 success, 2 bad command line, 3 unparseable config file,
4 unknown config section/key, 5 invalid parameter value.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bell, config, device, fit, qstate, source, tomo

EXPERIMENTS = ("jsa", "schmidt", "overlap", "sweep", "fringe", "chsh",
               "tomo", "calibrate", "budget")

EXIT_CONFIG_PARSE = 3
EXIT_UNKNOWN_KEY = 4
EXIT_BAD_VALUE = 5


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in row])


def _ring(cfg, which):
    section = cfg[f"source.{which}"]
    return source.RingParams(
        center_frequency=section["center_offset_ghz"],
        linewidth_fwhm=section["linewidth_fwhm_ghz"],
        fsr=section["fsr_ghz"],
    )


def _pump(cfg):
    p = cfg["pump"]
    return source.PumpParams(
        pulse_duration=p["pulse_duration_ps"],
        linewidth_fwhm=p["linewidth_fwhm_ghz"],
        rep_rate=p["rep_rate_mhz"],
        pairs_per_pulse=p["pairs_per_pulse"],
    )


def _device_config(cfg):
    return device.DeviceConfig(
        first_coupler_reflectivity=cfg["couplers"]["first_reflectivity"],
        signal_coupler_in=cfg["couplers"]["signal_in"],
        signal_coupler_out=cfg["couplers"]["signal_out"],
        idler_coupler_in=cfg["couplers"]["idler_in"],
        idler_coupler_out=cfg["couplers"]["idler_out"],
        filter_bandwidth=cfg["filters"]["bandwidth_ghz"],
        filter_selectivity_db=cfg["filters"]["selectivity_db"],
        filter_fsr=cfg["filters"]["fsr_ghz"],
        per_arm_transmission=cfg["counting"]["per_arm_transmission"],
        detector_efficiency=cfg["detectors"]["efficiency"],
        rep_rate=cfg["counting"]["rep_rate_mhz"],
        car=cfg["counting"]["car"],
    )


def _state(cfg):
    s = cfg["state"]
    return device.StateParams(beta=s["beta"], sigma=s["sigma"], theta=s["theta"])


def _grid_args(cfg):
    half = cfg["jsa"]["grid_half_width_ghz"]
    return (None if half <= 0 else half), cfg["jsa"]["grid_points"]


def _model_jsa(cfg, ring, pump, half, n):
    return source.compute_jsa(ring, pump, half, n,
                              pump_broadening=cfg["jsa"]["pump_broadening"])


def _fringe_counts(rho, theta_grid, devcfg, pump, integration_time, seed_seq):
    """Count records for a signal-phase fringe with both MZIs at pi/2."""
    records = []
    for theta, seed in zip(theta_grid, seed_seq.spawn(len(theta_grid))):
        setting = device.MeasurementSetting(
            theta_sy=math.pi / 2.0, theta_sz=float(theta),
            theta_iy=math.pi / 2.0, theta_iz=0.0)
        records.append(device.simulate_counts(
            rho, setting, devcfg, pump, integration_time, seed))
    return records


def _fit_fringe_records(theta_grid, records, port=0):
    """Accidental-subtracted unweighted fringe fit of one port pair's counts."""
    corrected = np.array([
        max(rec.coincidences[port] - rec.accidentals_estimate / 4.0, 0.0)
        for rec in records])
    return fit.fit_fringe(fit.FringeData(np.asarray(theta_grid), corrected))


def run_jsa(cfg, out, seed):
    pump = _pump(cfg)
    half, n = _grid_args(cfg)
    outputs = []
    summary = {}
    for which in ("top", "bottom"):
        grid = _model_jsa(cfg, _ring(cfg, which), pump, half, n)
        source.jsa_to_csv(grid, out / f"jsa_{which}.csv")
        source.save_jsa_json(grid, out / f"jsa_{which}.json")
        outputs += [f"jsa_{which}.csv", f"jsa_{which}.json"]
        summary[f"schmidt_number_{which}"] = source.schmidt_decompose(grid).schmidt_number
    _write_json(out / "jsa_summary.json", summary)
    outputs.append("jsa_summary.json")
    print(f"jsa: K_top = {summary['schmidt_number_top']:.4f}, "
          f"K_bottom = {summary['schmidt_number_bottom']:.4f}")
    return {"outputs": outputs, "summary": summary,
            "description": "model joint spectral amplitudes of both ring sources"}


def run_schmidt(cfg, out, seed):
    pump = _pump(cfg)
    ring = _ring(cfg, cfg["jsa"]["source"])
    half, n = _grid_args(cfg)
    grid = _model_jsa(cfg, ring, pump, half, n)
    result = source.schmidt_decompose(grid)
    doubled = source.schmidt_decompose(_model_jsa(cfg, ring, pump, half, 2 * n))
    rel_change = abs(doubled.schmidt_number - result.schmidt_number) / result.schmidt_number
    report = {
        "schmidt_number": result.schmidt_number,
        "schmidt_number_doubled_grid": doubled.schmidt_number,
        "grid_doubling_relative_change": rel_change,
        "hom_visibility": source.hom_visibility(result),
        "singular_values": result.singular_values[:16].tolist(),
        "lower_bound": result.lower_bound,
        "grid_points": n,
    }
    _write_json(out / "schmidt.json", report)
    print(f"schmidt: K = {result.schmidt_number:.4f} "
          f"(grid doubling moves it {100 * rel_change:.3f}%)")
    return {"outputs": ["schmidt.json"], "summary": report,
            "description": "Schmidt-mode analysis of the model joint spectrum"}


def run_overlap(cfg, out, seed):
    pump = _pump(cfg)
    top, bottom = _ring(cfg, "top"), _ring(cfg, "bottom")
    gmax = max(top.linewidth_fwhm, bottom.linewidth_fwhm)
    half = 3.0 * gmax + max(abs(top.center_frequency), abs(bottom.center_frequency))
    _, n = _grid_args(cfg)
    grid_top = _model_jsa(cfg, top, pump, half, n)
    grid_bottom = _model_jsa(cfg, bottom, pump, half, n)
    sigma = source.jsa_overlap(grid_top, grid_bottom)
    report = {
        "sigma_re": sigma.real,
        "sigma_im": sigma.imag,
        "sigma_mag": abs(sigma),
        "density_overlap": source.jsd_overlap(grid_top, grid_bottom),
    }
    _write_json(out / "overlap.json", report)
    print(f"overlap: |sigma| = {abs(sigma):.4f}, density overlap = {report['density_overlap']:.4f}")
    return {"outputs": ["overlap.json"], "summary": report,
            "description": "spectral overlap of the two ring sources"}


def run_sweep(cfg, out, seed):
    sw = cfg["sweep"]
    detunings = np.linspace(sw["min_ghz"], sw["max_ghz"], sw["points"])
    points = source.detuning_sweep(
        _ring(cfg, "top"), _ring(cfg, "bottom"), _pump(cfg), detunings,
        background_floor=sw["floor"], beta=sw["beta"], ceiling=sw["ceiling"])
    _write_csv(out / "sweep.csv",
               ["detuning_ghz", "sigma_mag", "predicted_visibility"],
               [(p.detuning, p.sigma_mag, p.visibility) for p in points])
    curve = fit.visibility_vs_detuning(
        points, counts_per_point=float(sw["counts_per_point"]),
        n_phases=sw["phase_points"], rng_seed=seed)
    _write_csv(out / "sweep_fit.csv",
               ["detuning_ghz", "visibility", "stderr"],
               [(c.detuning, c.visibility, c.stderr) for c in curve])
    peak = max(curve, key=lambda c: c.visibility)
    summary = {
        "peak_detuning_ghz": peak.detuning,
        "peak_visibility": peak.visibility,
        "peak_stderr": peak.stderr,
        "floor": sw["floor"],
    }
    _write_json(out / "sweep_summary.json", summary)
    print(f"sweep: peak fitted visibility {peak.visibility:.4f} +/- {peak.stderr:.4f} "
          f"at {peak.detuning:g} GHz, floor {sw['floor']}")
    return {"outputs": ["sweep.csv", "sweep_fit.csv", "sweep_summary.json"],
            "summary": summary,
            "description": "fringe visibility versus source detuning"}


def run_fringe(cfg, out, seed):
    rho = device.build_state(_state(cfg))
    devcfg = _device_config(cfg)
    pump = _pump(cfg)
    n = cfg["fringe"]["phase_points"]
    theta_grid = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    records = _fringe_counts(rho, theta_grid, devcfg, pump,
                             cfg["fringe"]["integration_time_s"],
                             np.random.SeedSequence(seed))
    _write_csv(out / "fringe.csv",
               ["theta_sz", "c00", "c01", "c10", "c11", "t", "accidentals"],
               [(float(t), *[float(c) for c in rec.coincidences],
                 rec.integration_time, rec.accidentals_estimate)
                for t, rec in zip(theta_grid, records)])
    fitted = _fit_fringe_records(theta_grid, records)
    v = min(max(fitted.visibility, 0.0), 1.0)
    report = {
        "visibility": fitted.visibility,
        "visibility_err": fitted.visibility_err,
        "phase0": fitted.phase0,
        "offset": fitted.offset,
        "s_additive": bell.s_from_visibility(v, "additive"),
        "s_additive_err": math.sqrt(2.0) * fitted.visibility_err,
        "s_multiplicative": bell.s_from_visibility(v, "multiplicative"),
        "s_multiplicative_err": 2.0 * math.sqrt(2.0) * fitted.visibility_err,
    }
    _write_json(out / "fringe_fit.json", report)
    print(f"fringe: V = {fitted.visibility:.4f} +/- {fitted.visibility_err:.4f}, "
          f"S_mult = {report['s_multiplicative']:.4f}")
    return {"outputs": ["fringe.csv", "fringe_fit.json"], "summary": report,
            "description": "pair-phase coincidence fringe and visibility-derived S"}


def run_chsh(cfg, out, seed):
    params = _state(cfg)
    rho = device.build_state(params)
    settings = bell.canonical_settings(params.theta)
    exact = bell.chsh_fixed_settings(rho, settings)
    report = {
        "s_model": bell.chsh_model(params.beta, params.sigma),
        "s_fixed_exact": exact.s_value,
        "s_optimal": bell.chsh_optimal(rho),
        "exact": bell.report(exact, settings),
    }
    outputs = ["chsh.json"]
    if not cfg["chsh"]["noiseless"]:
        devcfg = _device_config(cfg)
        pump = _pump(cfg)
        seeds = np.random.SeedSequence(seed).spawn(4)
        records = []
        pairs = [(settings.a, settings.b), (settings.a, settings.b_prime),
                 (settings.a_prime, settings.b), (settings.a_prime, settings.b_prime)]
        for (sig, idl), s in zip(pairs, seeds):
            setting = device.MeasurementSetting(sig[0], sig[1], idl[0], idl[1])
            records.append(device.simulate_counts(
                rho, setting, devcfg, pump, cfg["chsh"]["integration_time_s"], s))
        device.records_to_csv(records, out / "chsh_counts.csv")
        outputs.append("chsh_counts.csv")
        counted = bell.chsh_from_counts(records, n_mc=cfg["chsh"]["mc_samples"],
                                        rng_seed=seed)
        report["counted"] = bell.report(counted, settings)
    _write_json(out / "chsh.json", report)
    line = f"chsh: model S = {report['s_model']:.4f}, exact fixed-settings S = {exact.s_value:.4f}"
    if "counted" in report:
        line += (f", counted S = {report['counted']['s']:.4f}"
                 f" +/- {report['counted']['standard_error']:.4f}")
    print(line)
    return {"outputs": outputs, "summary": {"s_model": report["s_model"],
                                            "s_fixed_exact": exact.s_value},
            "description": "CHSH evaluation at canonical settings"}


_TOMO_TARGETS = {
    "single": lambda cfg: qstate.projector(qstate.two_qubit_ket("0", "0")),
    "mixed": lambda cfg: np.diag([0.5, 0.0, 0.0, 0.5]).astype(complex),
    "entangled": lambda cfg: qstate.projector(qstate.bell_phi_plus()),
}


def _tomo_state(cfg):
    t = cfg["tomo"]
    name = t["configuration"]
    if name == "single":
        return device.StateParams(beta=1.0, sigma=0.0)
    if name == "mixed":
        return device.StateParams(beta=t["mixed_beta"], sigma=0.0)
    if name == "entangled":
        return device.StateParams(beta=t["entangled_beta"], sigma=t["entangled_sigma"],
                                  theta=cfg["state"]["theta"])
    raise ValueError(f"unknown tomo configuration {name!r}; "
                     "use single, mixed, or entangled")


def run_tomo(cfg, out, seed):
    t = cfg["tomo"]
    params = _tomo_state(cfg)
    rho_true = device.build_state(params)
    target = _TOMO_TARGETS[t["configuration"]](cfg)
    devcfg = _device_config(cfg)
    pump = _pump(cfg)
    seeds = np.random.SeedSequence(seed).spawn(9)
    records = [
        device.simulate_counts(rho_true, setting, devcfg, pump,
                               t["integration_time_s"], s)
        for setting, s in zip(tomo.measurement_settings(), seeds)
    ]
    device.records_to_csv(records, out / "tomo_counts.csv")
    estimates = tomo.estimate_probabilities(records, stderr_scale=t["stderr_scale"])
    result = tomo.monte_carlo(estimates, n=t["mc_samples"], rng_seed=seed,
                              target=target, method=t["resampling"])
    report = tomo.tomography_report(result, target=target)
    report["configuration"] = t["configuration"]
    report["state_params"] = {"beta": params.beta, "sigma": params.sigma,
                              "theta": params.theta}
    _write_json(out / "tomo_report.json", report)
    print(f"tomo[{t['configuration']}]: F = {result.fidelity_to_target:.4f} "
          f"+/- {result.fidelity_err:.4f}, purity = {result.purity:.4f} "
          f"+/- {result.purity_err:.4f}, S_opt = {result.s_optimal:.4f} "
          f"+/- {result.s_optimal_err:.4f}")
    return {"outputs": ["tomo_counts.csv", "tomo_report.json"],
            "summary": {"configuration": t["configuration"],
                        "fidelity_to_target": result.fidelity_to_target,
                        "purity": result.purity, "s_optimal": result.s_optimal},
            "description": "36-projector tomography with Monte-Carlo uncertainties"}


_CAL_HEATERS = ("signal_y", "idler_y", "pump_splitter")


def run_calibrate(cfg, out, seed):
    c = cfg["calibrate"]
    voltages = np.linspace(0.0, c["v_max"], c["points"])
    rng = np.random.default_rng(seed)
    sweeps = {}
    true = {}
    for name in _CAL_HEATERS:
        theta0, kappa, refl = (c[f"theta0_{name}"], c[f"kappa_{name}"],
                               c[f"reflectivity_{name}"])
        clean = fit.mzi_intensity(voltages, theta0, kappa, refl, 1000.0)
        noisy = clean * (1.0 + c["relative_noise"] * rng.normal(size=clean.size))
        sweeps[name] = (voltages, noisy)
        true[name] = {"theta0": theta0, "kappa": kappa, "reflectivity": refl}
    model = fit.calibrate_phase_voltage(sweeps)
    report = {}
    for name, cal in model.heaters.items():
        report[name] = {
            "true": true[name],
            "fitted": {"theta0": cal.theta0, "kappa": cal.kappa,
                       "reflectivity": cal.reflectivity, "residual": cal.residual,
                       "degenerate": cal.degenerate},
        }
        _write_csv(out / f"calibrate_{name}.csv", ["voltage", "intensity"],
                   [(float(v), float(i)) for v, i in zip(*sweeps[name])])
    _write_json(out / "calibrate.json", report)
    outputs = sorted([f"calibrate_{n}.csv" for n in _CAL_HEATERS] + ["calibrate.json"])
    worst = max(abs(report[n]["fitted"]["reflectivity"] - true[n]["reflectivity"])
                for n in _CAL_HEATERS)
    print(f"calibrate: worst reflectivity error {worst:.4f} over {len(_CAL_HEATERS)} heaters")
    return {"outputs": outputs, "summary": report,
            "description": "closed-loop phase-voltage and coupler calibration"}


def run_budget(cfg, out, seed):
    pump = _pump(cfg)
    devcfg = _device_config(cfg)
    rate = device.coincidence_rate(devcfg, pump)
    target = cfg["budget"]["target_cps"]
    required = device.required_arm_transmission(devcfg, pump, target)
    accidental_rate = 0.0 if math.isinf(devcfg.car) else rate / devcfg.car
    mu_top, mu_bottom = cfg["sources"]["mu_top"], cfg["sources"]["mu_bottom"]
    r = devcfg.first_coupler_reflectivity
    report = {
        "pair_rate_per_s": devcfg.rep_rate * 1e6 * pump.pairs_per_pulse,
        "detected_cps": rate,
        "car": devcfg.car,
        "accidental_cps": accidental_rate,
        "target_cps": target,
        "required_arm_transmission": required,
        "required_arm_transmission_db": 10.0 * math.log10(required),
        "balance": {
            "quadratic": device.balance_from_brightness(mu_top, mu_bottom, r, "quadratic"),
            "linear": device.balance_from_brightness(mu_top, mu_bottom, r, "linear"),
            "none": device.balance_from_brightness(mu_top, mu_bottom, r, "none"),
        },
        "filter": {
            "peak_transmission": device.filter_transmission(devcfg, 0.0),
            "half_bandwidth_transmission":
                device.filter_transmission(devcfg, devcfg.filter_bandwidth / 2.0),
            "mid_band_transmission":
                device.filter_transmission(devcfg, devcfg.filter_fsr / 2.0),
        },
    }
    _write_json(out / "budget.json", report)
    print(f"budget: detected rate {rate:.2f} cps (target {target:g}), "
          f"CAR {devcfg.car:g}, arm transmission for target "
          f"{report['required_arm_transmission_db']:.1f} dB")
    return {"outputs": ["budget.json"], "summary": report,
            "description": "count-rate and loss budget"}


_RUNNERS = {
    "jsa": run_jsa, "schmidt": run_schmidt, "overlap": run_overlap,
    "sweep": run_sweep, "fringe": run_fringe, "chsh": run_chsh,
    "tomo": run_tomo, "calibrate": run_calibrate, "budget": run_budget,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ringpair",
        description="Run one simulated chip experiment and write its artifacts.")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", default=None, help="configuration file (INI)")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="random seed (default from config [run] seed)")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="override one config value")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = config.load_config(args.config, args.overrides)
    except config.UnknownKeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNKNOWN_KEY
    except config.ConfigParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_PARSE

    seed = args.seed if args.seed is not None else cfg["run"]["seed"]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        manifest = _RUNNERS[args.experiment](cfg, out, seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_VALUE
    manifest_doc = {
        "experiment": args.experiment,
        "seed": seed,
        "config": cfg,
        "outputs": sorted(manifest["outputs"]),
        "description": manifest.get("description", ""),
    }
    _write_json(out / "manifest.json", manifest_doc)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
