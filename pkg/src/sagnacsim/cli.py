"""Experiment runner: config-driven sweeps, reports, and tag dumps.

Every run resolves one ExperimentConfig (defaults < preset < config file
< command-line flags), derives all randomness from the single top-level
seed via named substreams, and writes into the output directory:

* ``config.ini``    the fully resolved configuration
* ``manifest.json`` config hash, seed, backend, library versions
* ``<kind>.csv``    one row per grid point or projection setting
* ``report.json``   fits and derived figures of merit
* ``tags/``         binary tag dumps (only with ``--dump-tags``)

Grid points run in parallel; all files are written by the main thread.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__, config, control, correlate, montecarlo, qstate, tomography
from ._kernels import BACKEND

# per-point simulated seconds when duration_s = 0: long enough for about
# this many accidental counts, clamped to keep desk-scale runtimes
AUTO_OFFSET_COUNTS = 150.0
AUTO_MIN_S = 4.0
AUTO_MAX_S = 400.0


def _auto_duration(cfg: config.ExperimentConfig, source) -> float:
    if cfg.duration_s > 0:
        return cfg.duration_s
    plan = _plan(cfg, source, seed=0)
    lam_s, lam_i, _ = montecarlo.window_intensities(plan)
    acc_rate = lam_s * lam_i / source.window_s()
    if acc_rate <= 0:
        return AUTO_MIN_S
    return float(np.clip(AUTO_OFFSET_COUNTS / acc_rate, AUTO_MIN_S, AUTO_MAX_S))


def _plan(cfg: config.ExperimentConfig, source, seed, duration_s=1.0,
          setting=("H", "H"), **overrides) -> montecarlo.RunPlan:
    kw = dict(
        source=source,
        duration_s=duration_s,
        seed=seed,
        setting=setting,
        detector_signal=cfg.detector,
        detector_idler=cfg.detector,
        tdc_jitter_ps=cfg.tdc_jitter_ps,
        batch_windows=1 << 24,
    )
    kw.update(overrides)
    return montecarlo.RunPlan(**kw)


def _window_spec(cfg: config.ExperimentConfig, pump) -> correlate.CoincidenceWindowSpec:
    return correlate.CoincidenceWindowSpec.for_pump(
        pump, width_ps=cfg.window_ps, cw_offset_ps=cfg.cw_offset_ps)


def _prepare_out(cfg: config.ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.save(cfg, out / "config.ini")
    manifest = {
        "kind": cfg.kind,
        "config_sha256": config.config_hash(cfg),
        "seed": cfg.seed,
        "backend": BACKEND,
        "versions": {
            "package": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_report(out: Path, report: dict) -> None:
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")


def _dump(out: Path, label: str, signal, idler) -> None:
    tags = out / "tags"
    tags.mkdir(exist_ok=True)
    montecarlo.write_tags_binary(signal, tags / f"{label}_signal.bin")
    montecarlo.write_tags_binary(idler, tags / f"{label}_idler.bin")


def _sweep_point(cfg, power_mw, index, dump_tags, out):
    source = cfg.source.with_power(power_mw)
    dur = _auto_duration(cfg, source)
    plan = _plan(cfg, source, seed=montecarlo.derive_seed(cfg.seed, cfg.kind, index),
                 duration_s=dur)
    signal, idler = montecarlo.simulate_run(plan, threads=1)
    if dump_tags:
        _dump(out, f"p{index:02d}", signal, idler)
    return dur, signal, idler


def _run_grid(cfg, out, dump_tags, analyze):
    """Simulate all grid points in parallel, then analyze in grid order."""
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        futures = [pool.submit(_sweep_point, cfg, p, k, dump_tags, out)
                   for k, p in enumerate(cfg.grid_mw)]
        results = [f.result() for f in futures]
    return [analyze(p, *res) for p, res in zip(cfg.grid_mw, results)]


def run_power_sweep(cfg: config.ExperimentConfig, dump_tags: bool = False) -> dict:
    """Coincidence rate and brightness per nm versus pump power."""
    out = _prepare_out(cfg)
    bandwidth = cfg.source.signal_channel.bandwidth_nm
    dead = cfg.detector.dead_time_ns * 1e-9

    def analyze(power, dur, signal, idler):
        spec = _window_spec(cfg, cfg.source.pump)
        st = correlate.count_coincidences(signal, idler, spec)
        live = correlate.dead_time_corrected(st, dead, dead)
        return [power, dur, st.coincidences, st.singles_signal, st.singles_idler,
                st.rate_hz, live.rate_hz, live.rate_hz / bandwidth]

    rows = _run_grid(cfg, out, dump_tags, analyze)
    _write_csv(out / "power_sweep.csv",
               ["power_mw", "duration_s", "coincidences", "singles_signal",
                "singles_idler", "rate_cps", "corrected_rate_cps",
                "brightness_cps_per_nm"], rows)
    report = {"kind": cfg.kind, "rows": len(rows)}
    positive = [(r[0], r[6]) for r in rows if r[0] > 0 and r[6] > 0]
    if len(positive) >= 3:
        fit = correlate.fit_power_law(positive)
        report["power_law"] = {"exponent": fit.exponent,
                               "exponent_err": fit.exponent_err,
                               "prefactor_cps": fit.prefactor}
    else:
        report["power_law"] = None
    _write_report(out, report)
    return report


def run_car_sweep(cfg: config.ExperimentConfig, dump_tags: bool = False) -> dict:
    """CAR versus pump power, with the noise model fitted to the sweep."""
    out = _prepare_out(cfg)

    def analyze(power, dur, signal, idler):
        spec = _window_spec(cfg, cfg.source.pump)
        r = correlate.car_from_tags(signal, idler, spec)
        return [power, dur, r.peak_counts, r.offset_counts, r.car,
                r.uncertainty, int(r.censored)]

    rows = _run_grid(cfg, out, dump_tags, analyze)
    _write_csv(out / "car_sweep.csv",
               ["power_mw", "duration_s", "peak_counts", "offset_counts",
                "car", "car_err", "censored"], rows)
    report = {"kind": cfg.kind, "rows": len(rows), "fit": None, "peak": None}
    eta_s, eta_i = cfg.source.efficiencies()
    dark = cfg.detector.dark_rate_hz * cfg.source.window_s()
    data = [(r[0], r[4]) for r in rows if r[0] > 0 and r[4] > 0 and not r[6]]
    if len(data) >= 4:  # fit_car_model's minimum
        try:
            fit = correlate.fit_car_model(data, cfg.source.pump, eta_s, eta_i,
                                          dark, dark, cw_window_ps=cfg.source.cw_slot_ps)
            params, converged = fit.params, True
        except correlate.FitError as err:
            params, converged = err.best, False
        if params is not None:
            p_pk, car_pk = correlate.car_peak(params, cfg.source.pump,
                                              cw_window_ps=cfg.source.cw_slot_ps)
            report["fit"] = {"gamma_combined": params.gamma_combined,
                             "gamma_noise": params.gamma_noise,
                             "converged": converged}
            report["peak"] = {"power_mw": p_pk, "car": car_pk}
    _write_report(out, report)
    return report


_BASES = {"HV": (("H", "H"), ("V", "H"), ("H", "V"), ("V", "V")),
          "DA": (("D", "D"), ("A", "D"), ("D", "A"), ("A", "A"))}


def run_visibility(cfg: config.ExperimentConfig, dump_tags: bool = False) -> dict:
    """Two-basis visibility of the entangled state at one pump power."""
    out = _prepare_out(cfg)
    source = cfg.source.with_power(cfg.grid_mw[0])
    spec = _window_spec(cfg, source.pump)

    def one(basis, k, setting):
        plan = _plan(cfg, source, seed=montecarlo.derive_seed(cfg.seed, "vis", basis, k),
                     duration_s=cfg.time_per_setting_s, setting=setting,
                     dephasing=cfg.dephasing,
                     werner_visibility=cfg.werner_visibility)
        signal, idler = montecarlo.simulate_run(plan, threads=1)
        if dump_tags:
            _dump(out, f"{basis}{k}", signal, idler)
        return correlate.count_coincidences(signal, idler, spec)

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        futures = {(basis, k): pool.submit(one, basis, k, s)
                   for basis, settings in _BASES.items()
                   for k, s in enumerate(settings)}
        stats = {key: f.result() for key, f in futures.items()}

    rows, records = [], {}
    for basis, settings in _BASES.items():
        counts = [stats[(basis, k)].coincidences for k in range(4)]
        for (sig, idl), c in zip(settings, counts):
            rows.append([basis, sig, idl, c, cfg.time_per_setting_s])
        records[basis] = correlate.visibility(counts, basis)
    _write_csv(out / "visibility.csv",
               ["basis", "signal_setting", "idler_setting", "coincidences",
                "duration_s"], rows)
    v_hv, v_da = records["HV"], records["DA"]
    report = {
        "kind": cfg.kind,
        "v_hv": v_hv.visibility, "v_hv_err": v_hv.uncertainty,
        "v_da": v_da.visibility, "v_da_err": v_da.uncertainty,
        "fidelity_witness": correlate.fidelity_witness(v_hv.visibility,
                                                       v_da.visibility),
    }
    _write_report(out, report)
    return report


def run_tomography(cfg: config.ExperimentConfig, dump_tags: bool = False,
                   record_path=None) -> dict:
    """Reconstruct one state, from a counts file or a simulated record."""
    out = _prepare_out(cfg)
    if record_path is not None:
        rec = tomography.read_record_csv(record_path)
    else:
        state = qstate.make_phase_state(
            2 ** -0.5, 2 ** -0.5, control.preset_phase(cfg.tomo_state))
        if cfg.werner_visibility < 1.0:
            state = qstate.werner_mix(state, cfg.werner_visibility)
        rec = tomography.simulate_tomography(
            state, cfg.tomo_rate_cps, cfg.time_per_setting_s,
            seed=montecarlo.derive_seed(cfg.seed, "tomo"))
    rho = tomography.mle_reconstruct(rec)
    tomography.write_record_csv(rec, out / "record.csv")
    report = tomography.density_matrix_report(rho)
    report["kind"] = cfg.kind
    _write_report(out, report)
    return report


def run_switch_experiment(cfg: config.ExperimentConfig, dump_tags: bool = False) -> dict:
    """Cycle the modulator presets and tomograph each scheduled state."""
    out = _prepare_out(cfg)
    params = control.ModulatorParams(
        v_pi_volts=cfg.eom.v_pi_volts,
        amplifier_gain_db=cfg.eom.amplifier_gain_db,
        insertion_loss_db=cfg.eom.insertion_loss_db)
    pattern = control.preset_pattern(
        cfg.pattern_names,
        repetition_rate_hz=cfg.eom.repetition_rate_hz,
        duty_cycle=cfg.eom.duty_cycle,
        target=cfg.eom.target,
        pulse_delay_s=cfg.eom.pulse_delay_s,
        optical_period_s=cfg.eom.optical_period_s)
    amp = 2 ** -0.5
    schedule = control.pattern_to_state_sequence(pattern, params, amp, amp)
    source = control.apply_insertion_loss(cfg.source.with_power(cfg.grid_mw[0]),
                                          params)
    window_ps = source.window_s() * montecarlo.PS_PER_S
    settings = tomography.default_settings()

    def one(j, st):
        plan = _plan(cfg, source,
                     seed=montecarlo.derive_seed(cfg.seed, "switch", st.label),
                     duration_s=cfg.time_per_setting_s,
                     setting=(st.signal, st.idler),
                     phase_schedule=schedule.entries,
                     werner_visibility=cfg.werner_visibility,
                     dephasing=cfg.dephasing)
        signal, idler = montecarlo.simulate_run(plan, threads=1)
        if dump_tags:
            _dump(out, f"s{j:02d}_{st.label}", signal, idler)
        return control.classify_coincidences(signal, idler, schedule, window_ps,
                                             width_ps=cfg.window_ps)

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        per_setting = list(pool.map(lambda a: one(*a), enumerate(settings)))
    counts = np.stack(per_setting, axis=1)  # (state, setting)

    fracs = schedule.fractions()
    report = {"kind": cfg.kind, "states": {}}
    for k, name in enumerate(cfg.pattern_names):
        rec = tomography.TomographyRecord(tuple(
            (settings[j], int(counts[k, j]), cfg.time_per_setting_s * fracs[k])
            for j in range(len(settings))))
        label = name.replace('+', 'p').replace('-', 'm')
        tomography.write_record_csv(rec, out / f"record_{k}_{label}.csv")
        rho = tomography.mle_reconstruct(rec)
        target = qstate.make_phase_state(amp, amp, control.preset_phase(name))
        entry = tomography.density_matrix_report(rho)
        entry["fidelity_to_target"] = qstate.fidelity_to_pure(rho, target)
        entry["target_phase_rad"] = control.preset_phase(name)
        report["states"][name] = entry
    _write_report(out, report)
    return report


def run_noise_floor(cfg: config.ExperimentConfig, dump_tags: bool = False) -> dict:
    """Singles rates versus pump power with the analyzers removed."""
    out = _prepare_out(cfg)

    def point(args):
        k, power = args
        source = cfg.source.with_power(power)
        dur = cfg.duration_s if cfg.duration_s > 0 else AUTO_MIN_S
        plan = _plan(cfg, source, seed=montecarlo.derive_seed(cfg.seed, "noise", k),
                     duration_s=dur, setting=None)
        signal, idler = montecarlo.simulate_run(plan, threads=1)
        if dump_tags:
            _dump(out, f"n{k:02d}", signal, idler)
        return [power, dur, signal.rate_hz, idler.rate_hz]

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        rows = list(pool.map(point, enumerate(cfg.grid_mw)))
    _write_csv(out / "noise_floor.csv",
               ["power_mw", "duration_s", "singles_signal_cps",
                "singles_idler_cps"], rows)
    report = {"kind": cfg.kind, "rows": len(rows)}
    for col, arm in ((2, "signal"), (3, "idler")):
        pts = [(r[0], r[col]) for r in rows if r[0] > 0 and r[col] > 0]
        if len(pts) >= 3:
            fit = correlate.fit_power_law(pts)
            report[f"exponent_{arm}"] = fit.exponent
    _write_report(out, report)
    return report


_RUNNERS = {
    "power-sweep": run_power_sweep,
    "car-sweep": run_car_sweep,
    "visibility": run_visibility,
    "tomography": run_tomography,
    "switch": run_switch_experiment,
    "noise-floor": run_noise_floor,
}

_COMMAND_KIND = {
    "sweep-power": "power-sweep",
    "sweep-car": "car-sweep",
    "visibility": "visibility",
    "tomo": "tomography",
    "switch": "switch",
    "noise": "noise-floor",
}


def _add_common(sub):
    sub.add_argument("--config", type=str, default=None,
                     help="INI config file; flags override its values")
    sub.add_argument("--seed", type=int, default=None, help="top-level seed")
    sub.add_argument("--out", type=str, default=None, help="output directory")
    sub.add_argument("--threads", type=int, default=None,
                     help="parallel grid points")
    sub.add_argument("--dump-tags", action="store_true",
                     help="write binary tag streams next to the reports")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sagnacsim",
        description="simulate and analyze the entangled pair source")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in _COMMAND_KIND:
        s = sub.add_parser(command)
        _add_common(s)
        if command in ("sweep-power", "sweep-car", "noise"):
            s.add_argument("--powers", type=float, nargs="+", default=None,
                           help="grid of average pump powers (mW)")
            s.add_argument("--duration", type=float, default=None,
                           help="seconds per grid point (0 = auto)")
        if command == "tomo":
            s.add_argument("--record", type=str, default=None,
                           help="reconstruct from an existing counts CSV")
            s.add_argument("--state", type=str, default=None,
                           choices=sorted(qstate.PHASE_OF_TARGET),
                           help="target state to simulate")
        if command in ("visibility", "switch", "tomo"):
            s.add_argument("--time-per-setting", type=float, default=None,
                           help="seconds per projection setting")
    return parser


def resolve_config(args) -> config.ExperimentConfig:
    cfg = config.preset(_COMMAND_KIND[args.command])
    if args.config is not None:
        cfg = config.load(args.config, base=cfg)
    cfg = replace(cfg, kind=_COMMAND_KIND[args.command])
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)
    if getattr(args, "powers", None):
        cfg = replace(cfg, grid_mw=tuple(args.powers),
                      source=cfg.source.with_power(args.powers[0]))
    if getattr(args, "duration", None) is not None:
        cfg = replace(cfg, duration_s=args.duration)
    if getattr(args, "state", None):
        cfg = replace(cfg, tomo_state=args.state)
    if getattr(args, "time_per_setting", None) is not None:
        cfg = replace(cfg, time_per_setting_s=args.time_per_setting)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        runner = _RUNNERS[cfg.kind]
        if cfg.kind == "tomography":
            report = runner(cfg, dump_tags=args.dump_tags,
                            record_path=getattr(args, "record", None))
        else:
            report = runner(cfg, dump_tags=args.dump_tags)
    except (ValueError, OSError, correlate.FitError, tomography.MleError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(json.dumps(report, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
