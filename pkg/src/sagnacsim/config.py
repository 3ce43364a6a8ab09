"""Experiment configuration: INI round-trip, presets, and hashing.

A config file is a flat key-value file with sections, one section per
physical subsystem.  Every field has a default, so an empty file is a
valid config; command-line flags override file values, which override
defaults.  Calibration tables (effective duty) are frozen constants and
intentionally not configurable here.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, replace

from .model import (
    ConversionParams,
    LossChain,
    PumpConfig,
    SourceConfig,
    SpectralChannel,
)
from .montecarlo import DetectorModel

KINDS = ("power-sweep", "car-sweep", "visibility", "tomography", "switch",
         "noise-floor")

# operating points solved against the calibrated source model: the CW
# power where the two-basis visibilities reach 0.995/0.990, the matching
# residual dephasing, and the switched-state pump power and depolarization
# that land the four reconstruction fidelities at 0.95
VISIBILITY_POWER_MW = 11.226952386831755
VISIBILITY_DEPHASING = 0.005025125628140725
SWITCH_POWER_MW = 1.2
SWITCH_WERNER = 0.9444577387988972


@dataclass(frozen=True)
class EomSettings:
    """Modulator drive settings carried alongside the optical config."""

    v_pi_volts: float = 4.0
    amplifier_gain_db: float = 24.082399653118496
    insertion_loss_db: float = 3.5
    repetition_rate_hz: float = 100e6
    duty_cycle: float = 0.05
    target: str = "late"
    pulse_delay_s: float = 2e-9
    optical_period_s: float = 10e-9


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a runner needs: source, grid, seeds, output location."""

    kind: str = "car-sweep"
    source: SourceConfig = field(default_factory=SourceConfig)
    grid_mw: tuple[float, ...] = (1.0,)
    seed: int = 1
    out_dir: str = "runs"
    threads: int = 1
    # 0 means size each run from the expected accidental rate
    duration_s: float = 0.0
    detector: DetectorModel = field(default_factory=DetectorModel)
    window_ps: float = 500.0
    cw_offset_ps: float = 100_000.0
    tdc_jitter_ps: float = 4.2
    pattern_names: tuple[str, ...] = ("phi+", "phi-", "i+", "i-")
    werner_visibility: float = 1.0
    dephasing: float = 0.0
    time_per_setting_s: float = 30.0
    tomo_state: str = "phi+"
    tomo_rate_cps: float = 2000.0
    eom: EomSettings = field(default_factory=EomSettings)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind: {self.kind!r}")
        if not self.grid_mw:
            raise ValueError("sweep grid must be nonempty")
        if any(p < 0 for p in self.grid_mw):
            raise ValueError("grid powers must be >= 0 mW")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


def preset(kind: str) -> ExperimentConfig:
    """Named experiment with the calibrated operating point filled in."""
    if kind == "power-sweep":
        return ExperimentConfig(
            kind=kind,
            source=SourceConfig(pump=PumpConfig(
                "pulsed", 1.0, repetition_rate_ghz=1.0, duty_cycle=0.09)),
            grid_mw=(2.0, 3.0, 4.5, 6.7, 10.0),
            duration_s=15.0,
        )
    if kind == "car-sweep":
        return ExperimentConfig(
            kind=kind,
            source=SourceConfig(pump=PumpConfig(
                "pulsed", 1.0, repetition_rate_ghz=1.0, duty_cycle=0.09)),
            grid_mw=(0.3, 0.43, 0.62, 0.9, 1.3, 1.9, 2.7, 3.9, 5.6, 8.0),
            duration_s=0.0,
        )
    if kind == "visibility":
        return ExperimentConfig(
            kind=kind,
            source=SourceConfig(pump=PumpConfig("cw", VISIBILITY_POWER_MW)),
            grid_mw=(VISIBILITY_POWER_MW,),
            dephasing=VISIBILITY_DEPHASING,
            time_per_setting_s=12.0,
        )
    if kind == "tomography":
        return ExperimentConfig(
            kind=kind,
            source=SourceConfig(pump=PumpConfig("cw", VISIBILITY_POWER_MW)),
            grid_mw=(VISIBILITY_POWER_MW,),
            time_per_setting_s=30.0,
        )
    if kind == "switch":
        return ExperimentConfig(
            kind=kind,
            source=SourceConfig(pump=PumpConfig(
                "pulsed", SWITCH_POWER_MW, repetition_rate_ghz=0.1,
                duty_cycle=0.01)),
            grid_mw=(SWITCH_POWER_MW,),
            werner_visibility=SWITCH_WERNER,
            time_per_setting_s=160.0,
        )
    if kind == "noise-floor":
        return ExperimentConfig(
            kind=kind,
            source=SourceConfig(pump=PumpConfig("cw", 1.0)),
            grid_mw=(0.5, 0.85, 1.4, 2.4, 4.0),
            duration_s=20.0,
        )
    raise ValueError(f"unknown experiment kind: {kind!r}")


# --- INI round-trip -----------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return " ".join(_fmt(v) for v in value)
    return str(value)


def to_ini(cfg: ExperimentConfig) -> str:
    src, pump, conv, loss = cfg.source, cfg.source.pump, cfg.source.conversion, cfg.source.loss
    sections = {
        "experiment": {
            "kind": cfg.kind,
            "seed": cfg.seed,
            "out": cfg.out_dir,
            "threads": cfg.threads,
            "duration_s": cfg.duration_s,
            "grid_mw": cfg.grid_mw,
        },
        "pump": {
            "mode": pump.mode,
            "average_power_mw": pump.average_power_mw,
            "repetition_rate_ghz": pump.repetition_rate_ghz or 0.0,
            "duty_cycle": pump.duty_cycle,
            "center_wavelength_nm": pump.center_wavelength_nm,
            "cw_slot_ps": src.cw_slot_ps,
        },
        "conversion": {
            "gamma_shg": conv.gamma_shg,
            "gamma_shg_wg2": src.gamma_shg_wg2 if src.gamma_shg_wg2 is not None else conv.gamma_shg,
            "gamma_spdc": conv.gamma_spdc,
            "gamma_noise": conv.gamma_noise,
            "pump_split": conv.pump_split,
            "cw_noise_factor": conv.cw_noise_factor,
        },
        "channels": {
            "signal_nm": src.signal_channel.center_nm,
            "idler_nm": src.idler_channel.center_nm,
            "bandwidth_nm": src.signal_channel.bandwidth_nm,
        },
        "loss": {
            "circulator_db": loss.circulator_db,
            "notch_db": loss.notch_db,
            "demux_db": loss.demux_db,
            "analysis_db": loss.analysis_db,
            "detection_db": loss.detection_db,
            "extra_signal_db": loss.extra_signal_db,
            "extra_idler_db": loss.extra_idler_db,
        },
        "detector": {
            "efficiency": cfg.detector.efficiency,
            "dark_rate_hz": cfg.detector.dark_rate_hz,
            "dead_time_ns": cfg.detector.dead_time_ns,
            "jitter_rms_ps": cfg.detector.jitter_rms_ps,
        },
        "correlation": {
            "window_ps": cfg.window_ps,
            "cw_offset_ps": cfg.cw_offset_ps,
            "tdc_jitter_ps": cfg.tdc_jitter_ps,
        },
        "state": {
            "pattern": cfg.pattern_names,
            "werner_visibility": cfg.werner_visibility,
            "dephasing": cfg.dephasing,
            "time_per_setting_s": cfg.time_per_setting_s,
            "tomo_state": cfg.tomo_state,
            "tomo_rate_cps": cfg.tomo_rate_cps,
        },
        "eom": {
            "v_pi_volts": cfg.eom.v_pi_volts,
            "amplifier_gain_db": cfg.eom.amplifier_gain_db,
            "insertion_loss_db": cfg.eom.insertion_loss_db,
            "repetition_rate_hz": cfg.eom.repetition_rate_hz,
            "duty_cycle": cfg.eom.duty_cycle,
            "target": cfg.eom.target,
            "pulse_delay_s": cfg.eom.pulse_delay_s,
            "optical_period_s": cfg.eom.optical_period_s,
        },
    }
    out = io.StringIO()
    for name, body in sections.items():
        out.write(f"[{name}]\n")
        for key, value in body.items():
            out.write(f"{key} = {_fmt(value)}\n")
        out.write("\n")
    return out.getvalue()


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split())


def from_ini(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse a config file; missing keys keep the base (default) values."""
    cfg = base if base is not None else ExperimentConfig()
    ini = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        ini.read_string(text)
    except configparser.Error as err:
        raise ValueError(f"bad config file: {err}") from None

    def get(section, key, cast, fallback):
        if not ini.has_option(section, key):
            return fallback
        raw = ini.get(section, key)
        try:
            return cast(raw)
        except (TypeError, ValueError):
            raise ValueError(f"bad value for [{section}] {key}: {raw!r}") from None

    src = cfg.source
    pump = PumpConfig(
        mode=get("pump", "mode", str, src.pump.mode),
        average_power_mw=get("pump", "average_power_mw", float, src.pump.average_power_mw),
        repetition_rate_ghz=get("pump", "repetition_rate_ghz", float,
                                src.pump.repetition_rate_ghz or 0.0) or None,
        duty_cycle=get("pump", "duty_cycle", float, src.pump.duty_cycle),
        center_wavelength_nm=get("pump", "center_wavelength_nm", float,
                                 src.pump.center_wavelength_nm),
    )
    conv = ConversionParams(
        gamma_shg=get("conversion", "gamma_shg", float, src.conversion.gamma_shg),
        gamma_spdc=get("conversion", "gamma_spdc", float, src.conversion.gamma_spdc),
        gamma_noise=get("conversion", "gamma_noise", float, src.conversion.gamma_noise),
        pump_split=get("conversion", "pump_split", _floats, src.conversion.pump_split),
        cw_noise_factor=get("conversion", "cw_noise_factor", float,
                            src.conversion.cw_noise_factor),
    )
    loss = LossChain(
        circulator_db=get("loss", "circulator_db", float, src.loss.circulator_db),
        notch_db=get("loss", "notch_db", float, src.loss.notch_db),
        demux_db=get("loss", "demux_db", float, src.loss.demux_db),
        analysis_db=get("loss", "analysis_db", float, src.loss.analysis_db),
        detection_db=get("loss", "detection_db", float, src.loss.detection_db),
        extra_signal_db=get("loss", "extra_signal_db", float, src.loss.extra_signal_db),
        extra_idler_db=get("loss", "extra_idler_db", float, src.loss.extra_idler_db),
    )
    bw = get("channels", "bandwidth_nm", float, src.signal_channel.bandwidth_nm)
    source = replace(
        src,
        pump=pump,
        conversion=conv,
        loss=loss,
        signal_channel=SpectralChannel(
            get("channels", "signal_nm", float, src.signal_channel.center_nm), bw, "signal"),
        idler_channel=SpectralChannel(
            get("channels", "idler_nm", float, src.idler_channel.center_nm), bw, "idler"),
        gamma_shg_wg2=get("conversion", "gamma_shg_wg2", float,
                          src.gamma_shg_wg2 if src.gamma_shg_wg2 is not None
                          else src.conversion.gamma_shg),
        cw_slot_ps=get("pump", "cw_slot_ps", float, src.cw_slot_ps),
    )
    detector = DetectorModel(
        efficiency=get("detector", "efficiency", float, cfg.detector.efficiency),
        dark_rate_hz=get("detector", "dark_rate_hz", float, cfg.detector.dark_rate_hz),
        dead_time_ns=get("detector", "dead_time_ns", float, cfg.detector.dead_time_ns),
        jitter_rms_ps=get("detector", "jitter_rms_ps", float, cfg.detector.jitter_rms_ps),
    )
    eom = EomSettings(
        v_pi_volts=get("eom", "v_pi_volts", float, cfg.eom.v_pi_volts),
        amplifier_gain_db=get("eom", "amplifier_gain_db", float, cfg.eom.amplifier_gain_db),
        insertion_loss_db=get("eom", "insertion_loss_db", float, cfg.eom.insertion_loss_db),
        repetition_rate_hz=get("eom", "repetition_rate_hz", float, cfg.eom.repetition_rate_hz),
        duty_cycle=get("eom", "duty_cycle", float, cfg.eom.duty_cycle),
        target=get("eom", "target", str, cfg.eom.target),
        pulse_delay_s=get("eom", "pulse_delay_s", float, cfg.eom.pulse_delay_s),
        optical_period_s=get("eom", "optical_period_s", float, cfg.eom.optical_period_s),
    )
    return replace(
        cfg,
        kind=get("experiment", "kind", str, cfg.kind),
        seed=get("experiment", "seed", int, cfg.seed),
        out_dir=get("experiment", "out", str, cfg.out_dir),
        threads=get("experiment", "threads", int, cfg.threads),
        duration_s=get("experiment", "duration_s", float, cfg.duration_s),
        grid_mw=get("experiment", "grid_mw", _floats, cfg.grid_mw),
        source=source,
        detector=detector,
        window_ps=get("correlation", "window_ps", float, cfg.window_ps),
        cw_offset_ps=get("correlation", "cw_offset_ps", float, cfg.cw_offset_ps),
        tdc_jitter_ps=get("correlation", "tdc_jitter_ps", float, cfg.tdc_jitter_ps),
        pattern_names=get("state", "pattern", lambda s: tuple(s.split()),
                          cfg.pattern_names),
        werner_visibility=get("state", "werner_visibility", float, cfg.werner_visibility),
        dephasing=get("state", "dephasing", float, cfg.dephasing),
        time_per_setting_s=get("state", "time_per_setting_s", float,
                               cfg.time_per_setting_s),
        tomo_state=get("state", "tomo_state", str, cfg.tomo_state),
        tomo_rate_cps=get("state", "tomo_rate_cps", float, cfg.tomo_rate_cps),
        eom=eom,
    )


def load(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return from_ini(fh.read(), base)


def save(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_ini(cfg))


def config_hash(cfg: ExperimentConfig) -> str:
    """Digest of the fully resolved config; stable across reruns."""
    return hashlib.sha256(to_ini(cfg).encode()).hexdigest()[:16]
