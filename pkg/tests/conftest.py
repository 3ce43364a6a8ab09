"""Shared test fixtures: bench-like source setups and detector variants."""

from dataclasses import replace

from sagnacsim.model import LossChain, PumpConfig, SourceConfig
from sagnacsim.montecarlo import DetectorModel

#: rate-anchor input power (7.9 dBm) used for the frozen model constants
P_REF_MW = 10.0 ** 0.79

#: lossless chain: every stage and both per-arm corrections at 0 dB
LOSSLESS = LossChain(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

#: bench detector (300 Hz darks, 1 us dead time, 50 ps jitter)
PHYSICAL_DETECTOR = DetectorModel()

#: noiseless, instantaneous detector for clean statistics oracles
IDEAL_DETECTOR = DetectorModel(dark_rate_hz=0.0, dead_time_ns=0.0,
                               jitter_rms_ps=0.0)


def pulsed_source(power_mw: float, rep_ghz: float = 1.0,
                  duty: float = 0.09) -> SourceConfig:
    return SourceConfig(pump=PumpConfig("pulsed", power_mw, rep_ghz, duty))


def cw_source(power_mw: float) -> SourceConfig:
    return SourceConfig(pump=PumpConfig("cw", power_mw))


def without_noise(cfg: SourceConfig) -> SourceConfig:
    return replace(cfg, conversion=replace(cfg.conversion, gamma_noise=0.0))


def with_mean_pairs(cfg: SourceConfig, mu: float) -> SourceConfig:
    """Rescale the pair coefficient so cfg emits `mu` pairs per window."""
    mu0 = cfg.mean_pairs_window()
    conv = replace(cfg.conversion,
                   gamma_spdc=cfg.conversion.gamma_spdc * mu / mu0)
    return replace(cfg, conversion=conv)
