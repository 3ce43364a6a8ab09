"""Closed-form models of the bidirectional SHG + SPDC source.

Power chain: a 1560 nm pump is split on a PBS; each loop direction drives
second-harmonic generation in one ppLN waveguide (undepleted pump, so SHG
power is quadratic in pump power) and the 780 nm light pumps SPDC in the
other waveguide (pair rate linear in SHG power).  Pair rate is therefore
quadratic in pump power, while the spontaneous-Raman background of the
fiber is linear in it.

Unit conventions (used package-wide):
    power          mW          (dBm only at the CLI boundary)
    wavelength     nm
    loss           dB
    time windows   ps arguments, seconds internally
    gamma_shg      1/mW        (SHG conversion per waveguide)
    gamma_spdc     pairs/s per mW of average SHG power, whole SPDC band
    gamma_noise    photons/s per mW of pump, per arm, within a 1 nm channel
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

# emission band covered by the SPDC spectra; channel fractions are
# normalized against the envelope mass inside this band
BAND_NM = (1530.0, 1590.0)

_FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class PumpConfig:
    """Pump power/repetition/duty right before the loop PBS."""

    mode: str = "pulsed"  # "cw" | "pulsed"
    average_power_mw: float = 1.0
    repetition_rate_ghz: float = 1.0
    duty_cycle: float = 1.0
    center_wavelength_nm: float = 1560.0

    def __post_init__(self):
        if self.mode not in ("cw", "pulsed"):
            raise ValueError(f"unknown pump mode {self.mode!r}")
        if self.average_power_mw < 0:
            raise ValueError("average power must be >= 0")
        if not 0.0 < self.duty_cycle <= 1.0:
            raise ValueError("duty cycle must be in (0, 1]")
        if self.mode == "pulsed" and self.repetition_rate_ghz <= 0:
            raise ValueError("pulsed mode requires repetition_rate > 0")
        if self.mode == "cw" and self.duty_cycle != 1.0:
            raise ValueError("CW pump has duty cycle 1")

    @property
    def period_s(self) -> float:
        return 1e-9 / self.repetition_rate_ghz


@dataclass(frozen=True)
class ConversionParams:
    """Cascade coefficients and the pump power split between directions.

    gamma_spdc and gamma_noise defaults are calibrated against the
    reference bench at 6.166 mW input (coincidences at 1 GHz / 9% duty,
    singles in CW); the split default balances the two conversion paths
    so the emitted state is equal-amplitude.
    """

    gamma_shg: float = 1.0 / 3000.0  # 10% conversion at 300 mW
    gamma_spdc: float = 2.2224419e9  # whole-band pairs/s per mW doubled light
    gamma_noise: float = 9.11827e4  # photons/s per mW per arm per nm
    pump_split: tuple[float, float] = (0.5189082856317436, 0.4810917143682564)
    cw_noise_factor: float = 1.2  # CW Raman slightly above pulsed

    def __post_init__(self):
        if min(self.gamma_shg, self.gamma_spdc, self.gamma_noise) < 0:
            raise ValueError("conversion coefficients must be >= 0")
        if abs(sum(self.pump_split) - 1.0) > 1e-9 or min(self.pump_split) < 0:
            raise ValueError("pump_split fractions must be >= 0 and sum to 1")


@dataclass(frozen=True)
class SpectralChannel:
    center_nm: float
    bandwidth_nm: float
    role: str = "signal"  # "signal" | "idler"

    def __post_init__(self):
        if self.bandwidth_nm <= 0:
            raise ValueError("bandwidth must be > 0")
        if not BAND_NM[0] <= self.center_nm <= BAND_NM[1]:
            raise ValueError(f"channel center outside emission band {BAND_NM}")


@dataclass(frozen=True)
class SpdcSpectrum:
    """Gaussian emission envelopes of the two waveguides."""

    degeneracy_nm: float = 1560.0
    fwhm_wg1_nm: float = 58.0
    fwhm_wg2_nm: float = 68.0
    band_nm: tuple[float, float] = BAND_NM

    def __post_init__(self):
        if self.fwhm_wg1_nm <= 0 or self.fwhm_wg2_nm <= 0:
            raise ValueError("FWHM must be > 0")

    def sigma_nm(self, waveguide: int) -> float:
        if waveguide == 1:
            return self.fwhm_wg1_nm * _FWHM_TO_SIGMA
        if waveguide == 2:
            return self.fwhm_wg2_nm * _FWHM_TO_SIGMA
        raise ValueError("waveguide must be 1 or 2")


@dataclass(frozen=True)
class LossChain:
    """Per-stage losses (dB) from loop output to detection.

    The five named stages carry the channel-averaged budget; the per-arm
    fields hold the deviation of each arm from that average (the demux
    and splice losses are not identical on both channels).
    """

    circulator_db: float = 1.0
    notch_db: float = 1.3
    demux_db: float = 6.0
    analysis_db: float = 3.25
    detection_db: float = 1.3
    extra_signal_db: float = -1.05
    extra_idler_db: float = 1.05

    def __post_init__(self):
        stages = (self.circulator_db, self.notch_db, self.demux_db,
                  self.analysis_db, self.detection_db)
        if min(stages) < 0:
            raise ValueError("stage losses must be >= 0 dB")

    @property
    def stage_sum_db(self) -> float:
        return (self.circulator_db + self.notch_db + self.demux_db
                + self.analysis_db + self.detection_db)

    def total_db(self, channel: str) -> float:
        if channel == "signal":
            return self.stage_sum_db + self.extra_signal_db
        if channel == "idler":
            return self.stage_sum_db + self.extra_idler_db
        raise ValueError("channel must be 'signal' or 'idler'")


@dataclass(frozen=True)
class FiberNoiseParams:
    """Inputs of the four-wave-mixing significance product."""

    nonlinear_gamma_w_km: float
    pump_peak_power_w: float
    fiber_length_km: float

    def __post_init__(self):
        if min(self.nonlinear_gamma_w_km, self.pump_peak_power_w, self.fiber_length_km) < 0:
            raise ValueError("all parameters must be >= 0")


def shg_average_power(pump: PumpConfig, conv: ConversionParams) -> float:
    """Average SHG power (mW) of one waveguide pumped with the full pump.

    Rectangular pulses: peak power = average/duty, and the quadratic
    undepleted-pump law gives average SHG = gamma * P_avg^2 / duty.
    """
    return conv.gamma_shg * pump.average_power_mw**2 / pump.duty_cycle


def _window_s(pump: PumpConfig, window_ps: float) -> float:
    # pulsed emission is bunched per pulse period; CW uses the caller's slot
    if pump.mode == "pulsed":
        return pump.period_s
    return window_ps * 1e-12


def mean_pairs_per_window(pump: PumpConfig, conv: ConversionParams,
                          window_ps: float) -> float:
    """Mean pair number per coincidence window (pulse period when pulsed)."""
    if window_ps <= 0:
        raise ValueError("window must be > 0")
    rate = conv.gamma_spdc * shg_average_power(pump, conv)  # pairs/s
    return rate * _window_s(pump, window_ps)


def mean_noise_per_window(pump: PumpConfig, conv: ConversionParams,
                          window_ps: float) -> float:
    """Mean background photons per arm per window; linear in pump power."""
    if window_ps <= 0:
        raise ValueError("window must be > 0")
    factor = conv.cw_noise_factor if pump.mode == "cw" else 1.0
    rate = conv.gamma_noise * pump.average_power_mw * factor  # photons/s
    return rate * _window_s(pump, window_ps)


def sfwm_figure_of_merit(p: FiberNoiseParams) -> float:
    """gamma * P0 * L; spontaneous four-wave mixing matters above ~0.1."""
    return p.nonlinear_gamma_w_km * p.pump_peak_power_w * p.fiber_length_km


def spectral_density(spec: SpdcSpectrum, wavelength_nm: float, waveguide: int) -> float:
    """Relative emission density, 1 at degeneracy, 0.5 at +-FWHM/2."""
    sigma = spec.sigma_nm(waveguide)
    x = (wavelength_nm - spec.degeneracy_nm) / sigma
    return math.exp(-0.5 * x * x)


def conjugate_wavelength(signal_nm: float, degeneracy_nm: float = 1560.0) -> float:
    """Energy-matched idler wavelength: 1/l_i = 2/l_deg - 1/l_s."""
    if signal_nm <= 0:
        raise ValueError("wavelength must be > 0")
    inv = 2.0 / degeneracy_nm - 1.0 / signal_nm
    if inv <= 0:
        raise ValueError("no physical conjugate wavelength")
    return 1.0 / inv


def _gauss_mass(spec: SpdcSpectrum, waveguide: int, lo: float, hi: float) -> float:
    sigma = spec.sigma_nm(waveguide)
    mu = spec.degeneracy_nm
    s = sigma * math.sqrt(2.0)
    return 0.5 * (math.erf((hi - mu) / s) - math.erf((lo - mu) / s))


def channel_overlap_fraction(ch: SpectralChannel, spec: SpdcSpectrum,
                             waveguide: int) -> float:
    """Fraction of the in-band envelope mass falling inside the channel."""
    lo = max(ch.center_nm - ch.bandwidth_nm / 2.0, spec.band_nm[0])
    hi = min(ch.center_nm + ch.bandwidth_nm / 2.0, spec.band_nm[1])
    if hi <= lo:
        return 0.0
    band = _gauss_mass(spec, waveguide, *spec.band_nm)
    return _gauss_mass(spec, waveguide, lo, hi) / band


def chain_efficiency(chain: LossChain, channel: str) -> float:
    """Total transmittance of one arm, eta = 10^(-dB/10)."""
    return 10.0 ** (-chain.total_db(channel) / 10.0)


# --- aggregated source description -----------------------------------------

# Nominal duty -> effective duty, fitted from the observed 1 GHz rate pairs:
# long electrical settings produce rounder optical pulses whose effective
# (SHG-weighted) duty is below nominal; degraded multi-GHz drive runs above.
# Keyed by (repetition rate GHz, nominal duty).  Exact-match lookup only.
DUTY_CALIBRATION = (
    ((1.0, 0.49), 0.3892),
    ((4.0, 0.44), 0.4169),
    ((8.0, 0.50), 0.6742),
)


@dataclass(frozen=True)
class SourceConfig:
    """Everything needed to predict rates at the two detectors."""

    pump: PumpConfig = field(default_factory=PumpConfig)
    conversion: ConversionParams = field(default_factory=ConversionParams)
    spectrum: SpdcSpectrum = field(default_factory=SpdcSpectrum)
    signal_channel: SpectralChannel = SpectralChannel(1558.4, 1.0, "signal")
    idler_channel: SpectralChannel = SpectralChannel(1561.6, 1.0, "idler")
    loss: LossChain = field(default_factory=LossChain)
    gamma_shg_wg2: float | None = 1.1 / 3000.0  # 11% at 300 mW
    cw_slot_ps: float = 1000.0
    duty_calibration: tuple = DUTY_CALIBRATION

    def effective_duty(self) -> float:
        key = (self.pump.repetition_rate_ghz, self.pump.duty_cycle)
        if self.pump.mode == "pulsed":
            for cal_key, d_eff in self.duty_calibration:
                if cal_key == key:
                    return d_eff
        return self.pump.duty_cycle

    def window_s(self) -> float:
        if self.pump.mode == "pulsed":
            return self.pump.period_s
        return self.cw_slot_ps * 1e-12

    def pair_rate_by_direction(self) -> tuple[float, float]:
        """Emitted pairs/s in the selected channel pair, per loop direction.

        The H-pumped direction doubles in waveguide 1 and down-converts in
        waveguide 2; the V-pumped direction uses the opposite pair.
        """
        g1 = self.conversion.gamma_shg
        g2 = self.gamma_shg_wg2 if self.gamma_shg_wg2 is not None else g1
        duty = self.effective_duty()
        p = self.pump.average_power_mw
        s_h, s_v = self.conversion.pump_split
        rates = []
        for split, g_shg, spdc_wg in ((s_h, g1, 2), (s_v, g2, 1)):
            shg_mw = g_shg * (p * split) ** 2 / duty
            frac = channel_overlap_fraction(self.signal_channel, self.spectrum, spdc_wg)
            rates.append(self.conversion.gamma_spdc * shg_mw * frac)
        return tuple(rates)

    def state_amplitudes(self) -> tuple[float, float]:
        """(alpha, beta) of alpha|HH> + e^{i theta} beta|VV>."""
        r_h, r_v = self.pair_rate_by_direction()
        total = r_h + r_v
        if total == 0:
            return (math.sqrt(0.5), math.sqrt(0.5))
        return (math.sqrt(r_h / total), math.sqrt(r_v / total))

    def pair_rate_total(self) -> float:
        return sum(self.pair_rate_by_direction())

    def noise_rate_per_arm(self) -> float:
        """Background photons/s reaching one arm's analyzer, in-channel."""
        factor = (self.conversion.cw_noise_factor
                  if self.pump.mode == "cw" else 1.0)
        # flat-spectrum background: scales with channel bandwidth (1 nm ref)
        return (self.conversion.gamma_noise * self.pump.average_power_mw
                * factor * self.signal_channel.bandwidth_nm)

    def mean_pairs_window(self) -> float:
        return self.pair_rate_total() * self.window_s()

    def mean_noise_window(self) -> float:
        return self.noise_rate_per_arm() * self.window_s()

    def efficiencies(self) -> tuple[float, float]:
        return (chain_efficiency(self.loss, "signal"),
                chain_efficiency(self.loss, "idler"))

    def with_power(self, power_mw: float) -> "SourceConfig":
        return replace(self, pump=replace(self.pump, average_power_mw=power_mw))
