"""Coincidence analysis and figure-of-merit estimators.

Conventions:

* A coincidence is a (signal, idler) tag pair with |t_i - t_s - delay|
  within half the coincidence window; each tag is used at most once.
  Pairing is greedy in time order (earliest compatible partner), which
  yields the maximum matching on sorted streams and is symmetric under
  exchanging the two streams.
* Measured heralding is coincidences over same-arm singles,
  H_s = C / S_s; the loss-corrected estimate divides by the opposite
  arm's efficiency, H_s_est = H_s / eta_i.
* CAR is C_peak / C_offset - 1 with the accidental estimate taken at an
  adjacent pulse period (pulsed) or a shifted window (CW).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import exp, log, sqrt

import numpy as np
from scipy import optimize

from ._kernels import delay_histogram, match_count
from .model import (
    ConversionParams,
    PumpConfig,
    SourceConfig,
    mean_noise_per_window,
    mean_pairs_per_window,
)
from .montecarlo import DetectorModel, TimeTagStream
from . import qstate


class FitError(RuntimeError):
    """Fit did not converge; carries the best parameters found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


# --- coincidence counting ----------------------------------------------------


@dataclass(frozen=True)
class CoincidenceWindowSpec:
    """Coincidence window and the accidental-estimation offset.

    `mode` is "adjacent-pulse" (offset by whole pulse periods, pulsed
    pumping) or "shifted-window" (offset by a fixed delay, CW).  The
    resolved offset in ps is stored in `offset_ps`.
    """

    width_ps: float = 500.0
    mode: str = "adjacent-pulse"
    offset_ps: float = 1000.0

    def __post_init__(self):
        if self.width_ps <= 0:
            raise ValueError("window width must be > 0")
        if self.mode not in ("adjacent-pulse", "shifted-window"):
            raise ValueError(f"unknown accidental mode: {self.mode!r}")
        if self.offset_ps == 0:
            raise ValueError("accidental offset must be nonzero")

    @classmethod
    def for_pump(cls, pump: PumpConfig, width_ps: float = 500.0,
                 offset_periods: int = 1, cw_offset_ps: float = 100_000.0):
        """Resolve the accidental offset for a pump: one pulse period when
        pulsed, a fixed 100 ns shift for CW."""
        if pump.mode == "pulsed":
            return cls(width_ps, "adjacent-pulse", pump.period_s * 1e12 * offset_periods)
        return cls(width_ps, "shifted-window", cw_offset_ps)


@dataclass(frozen=True)
class CoincidenceStats:
    """Counts of one acquisition plus Poisson-propagated derived figures."""

    coincidences: int
    singles_signal: int
    singles_idler: int
    duration_s: float

    def __post_init__(self):
        if not 0 <= self.coincidences <= min(self.singles_signal, self.singles_idler):
            raise ValueError("coincidences must satisfy 0 <= C <= min(singles)")
        if self.duration_s <= 0:
            raise ValueError("duration must be > 0")

    @property
    def rate_hz(self) -> float:
        return self.coincidences / self.duration_s

    @property
    def rate_err_hz(self) -> float:
        return sqrt(self.coincidences) / self.duration_s

    @property
    def singles_rate_signal_hz(self) -> float:
        return self.singles_signal / self.duration_s

    @property
    def singles_rate_idler_hz(self) -> float:
        return self.singles_idler / self.duration_s

    @property
    def heralding_signal(self) -> float:
        return self.coincidences / self.singles_signal if self.singles_signal else 0.0

    @property
    def heralding_idler(self) -> float:
        return self.coincidences / self.singles_idler if self.singles_idler else 0.0

    def heralding_signal_err(self) -> float:
        if not self.coincidences or not self.singles_signal:
            return 0.0
        return self.heralding_signal * sqrt(1 / self.coincidences + 1 / self.singles_signal)

    def heralding_idler_err(self) -> float:
        if not self.coincidences or not self.singles_idler:
            return 0.0
        return self.heralding_idler * sqrt(1 / self.coincidences + 1 / self.singles_idler)


def _as_int64(times) -> np.ndarray:
    t = np.ascontiguousarray(times, dtype=np.int64)
    if len(t) > 1 and np.any(np.diff(t) < 0):
        raise ValueError("timestamps must be sorted ascending")
    return t


def count_coincidences(signal: TimeTagStream, idler: TimeTagStream,
                       spec: CoincidenceWindowSpec,
                       delay_ps: float = 0.0) -> CoincidenceStats:
    """Two-pointer coincidence sweep, linear in total tag count."""
    ts = _as_int64(signal.times_ps)
    ti = _as_int64(idler.times_ps)
    half = int(round(spec.width_ps / 2))
    shift = int(round(delay_ps))
    c = match_count(ts, ti - shift if shift else ti, half)
    return CoincidenceStats(c, len(ts), len(ti), signal.duration_s)


def dead_time_corrected(stats: CoincidenceStats, dead_signal_s: float,
                        dead_idler_s: float) -> CoincidenceStats:
    """Scale counts up to what live detectors would have registered.

    A non-paralyzable detector is blind for a fraction S_meas * tau of
    the run, exactly, so singles divide by (1 - S_meas tau) and
    coincidences by the product of both live fractions.
    """
    f_s = 1.0 - stats.singles_rate_signal_hz * dead_signal_s
    f_i = 1.0 - stats.singles_rate_idler_hz * dead_idler_s
    if f_s <= 0 or f_i <= 0:
        raise ValueError("measured rate exceeds the dead-time limit")
    return CoincidenceStats(stats.coincidences / (f_s * f_i),
                            stats.singles_signal / f_s,
                            stats.singles_idler / f_i,
                            stats.duration_s)


def coincidence_histogram(signal: TimeTagStream, idler: TimeTagStream,
                          bin_ps: float, span_ps: float):
    """Histogram of dt = t_idler - t_signal in symmetric bins around 0.

    Returns (centers_ps, counts); bin k covers dt within half a bin of
    k * bin_ps, for k in [-span//bin, +span//bin].
    """
    if bin_ps <= 0:
        raise ValueError("bin must be > 0")
    ts = _as_int64(signal.times_ps)
    ti = _as_int64(idler.times_ps)
    counts = delay_histogram(ts, ti, int(round(bin_ps)), int(round(span_ps)))
    n = (len(counts) - 1) // 2
    centers = np.arange(-n, n + 1, dtype=np.int64) * int(round(bin_ps))
    return centers, counts


@dataclass(frozen=True)
class CarResult:
    car: float
    uncertainty: float
    peak_counts: int
    offset_counts: int
    censored: bool = False  # zero accidentals: value is a lower bound


def car_from_tags(signal: TimeTagStream, idler: TimeTagStream,
                  spec: CoincidenceWindowSpec) -> CarResult:
    """Measured CAR: coincidences at zero delay over the offset estimate."""
    peak = count_coincidences(signal, idler, spec).coincidences
    acc = count_coincidences(signal, idler, spec, delay_ps=spec.offset_ps).coincidences
    if acc == 0:
        # no accidentals observed: quote the bound against one count
        return CarResult(float(peak - 1), float(max(peak, 1)), peak, 0, censored=True)
    car = peak / acc - 1.0
    err = (car + 1.0) * sqrt(1 / peak + 1 / acc) if peak else 0.0
    return CarResult(car, err, peak, acc)


# --- CAR model (pair and noise power laws through the source model) ----------


@dataclass(frozen=True)
class CarModelParams:
    """Effective per-window coefficients seen by one coincidence setup.

    gamma_combined: detected-basis pair rate / P^2 (pairs/s/mW^2), the
    product of the SHG and SPDC conversion coefficients folded with the
    analyzer pass fraction and channel overlap.
    gamma_noise: background photons/s/mW reaching one detector input.
    d_s, d_i: dark-count probabilities per coincidence window.
    """

    gamma_combined: float
    gamma_noise: float
    eta_s: float
    eta_i: float
    d_s: float
    d_i: float

    def __post_init__(self):
        if min(self.gamma_combined, self.gamma_noise, self.eta_s,
               self.eta_i, self.d_s, self.d_i) < 0:
            raise ValueError("parameters must be >= 0")
        if max(self.eta_s, self.eta_i) > 1:
            raise ValueError("efficiencies must be <= 1")


def car_model(params: CarModelParams, p_in_mw: float, pump: PumpConfig,
              cw_window_ps: float = 1000.0) -> float:
    """Analytic CAR at a given input power.

    mu and the noise number per window follow the source-model power
    laws (quadratic pairs, linear noise); CAR is the true-coincidence
    term over the product of the two singles terms, minus one.
    """
    drive = PumpConfig(pump.mode, p_in_mw, pump.repetition_rate_ghz,
                       pump.duty_cycle, pump.center_wavelength_nm)
    conv = ConversionParams(gamma_shg=1.0, gamma_spdc=params.gamma_combined,
                            gamma_noise=params.gamma_noise, cw_noise_factor=1.0)
    mu = mean_pairs_per_window(drive, conv, cw_window_ps)
    n = mean_noise_per_window(drive, conv, cw_window_ps)
    den_s = (mu + n) * params.eta_s + params.d_s
    den_i = (mu + n) * params.eta_i + params.d_i
    if den_s == 0 or den_i == 0:
        raise ValueError("all rates are zero: CAR undefined")
    return mu * params.eta_s * params.eta_i / (den_s * den_i) - 1.0


def car_params_from_config(cfg: SourceConfig,
                           detector_signal: DetectorModel,
                           detector_idler: DetectorModel,
                           setting: tuple[str, str] = ("H", "H")) -> CarModelParams:
    """Effective CAR-model coefficients for a full source + detector setup.

    Valid for computational-basis settings, where the analyzer pass
    fraction is the same for the pair term and both marginals.
    """
    if not set(setting) <= {"H", "V"}:
        raise ValueError("CAR model mapping needs an H/V-basis setting")
    alpha, beta = cfg.state_amplitudes()
    psi = qstate.make_phase_state(alpha, beta, 0.0)
    q = qstate.projection_probability(
        qstate.pure_to_density(psi), qstate.ProjectionSetting(*setting))
    base = cfg.pair_rate_total() * cfg.pump.duty_cycle / cfg.pump.average_power_mw**2
    noise = cfg.noise_rate_per_arm() / cfg.pump.average_power_mw / 2.0  # polarizer
    eta_s, eta_i = cfg.efficiencies()
    w = cfg.window_s()
    return CarModelParams(
        gamma_combined=base * q,
        gamma_noise=noise,
        eta_s=eta_s * detector_signal.efficiency,
        eta_i=eta_i * detector_idler.efficiency,
        d_s=detector_signal.dark_rate_hz * w,
        d_i=detector_idler.dark_rate_hz * w,
    )


# --- visibility and fidelity --------------------------------------------------


@dataclass(frozen=True)
class VisibilityRecord:
    """Two-photon visibility from four projection counts.

    `counts` is ordered (co, cross, cross, co): (HH, VH, HV, VV) in the
    computational basis or (DD, AD, DA, AA) in the diagonal one.
    """

    basis: str
    counts: tuple[float, float, float, float]
    visibility: float
    uncertainty: float


def visibility(counts, basis: str = "HV") -> VisibilityRecord:
    """(R_co - R_cross - R_cross' + R_co') over the sum of all four."""
    r = tuple(float(c) for c in counts)
    if len(r) != 4 or min(r) < 0:
        raise ValueError("need four rates >= 0")
    total = sum(r)
    if total == 0:
        raise ValueError("zero total rate: visibility undefined")
    v = (r[0] - r[1] - r[2] + r[3]) / total
    a, b = r[0] + r[3], r[1] + r[2]
    err = 2.0 * sqrt(b * b * a + a * a * b) / total**2  # Poisson on each count
    return VisibilityRecord(basis, r, v, err)


def fidelity_witness(v_hv: float, v_da: float) -> float:
    """Bell-state fidelity lower bound from two-basis visibilities."""
    if max(abs(v_hv), abs(v_da)) > 1:
        raise ValueError("visibilities must be in [-1, 1]")
    return 0.5 * (v_hv + v_da)


@dataclass(frozen=True)
class EmittedEstimate:
    rate_hz: float
    heralding_signal: float
    heralding_idler: float


def estimate_emitted(stats: CoincidenceStats, eta_s: float, eta_i: float) -> EmittedEstimate:
    """Loss-corrected emitted pair rate and heralding efficiencies."""
    if not (0 < eta_s <= 1 and 0 < eta_i <= 1):
        raise ValueError("efficiencies must be in (0, 1]")
    return EmittedEstimate(
        rate_hz=stats.rate_hz / (eta_s * eta_i),
        heralding_signal=stats.heralding_signal / eta_i,
        heralding_idler=stats.heralding_idler / eta_s,
    )


# --- fitting ------------------------------------------------------------------


@dataclass(frozen=True)
class CarFit:
    params: CarModelParams
    residual_norm: float


def fit_car_model(data, pump: PumpConfig, eta_s: float, eta_i: float,
                  d_s: float, d_i: float, cw_window_ps: float = 1000.0,
                  init=None, max_nfev: int = 2000) -> CarFit:
    """Fit (gamma_combined, gamma_noise) to measured (P_in, CAR) points.

    Damped least squares in log-parameter space (both coefficients are
    positive); multi-start over noise scales unless `init` pins the
    starting point.  Raises FitError with the best parameters so far if
    no start converges.
    """
    pts = [(float(p), float(c)) for p, c in data]
    if len(pts) < 4:
        raise ValueError("need at least 4 (power, CAR) points")
    powers = np.array([p for p, _ in pts])
    cars = np.array([c for _, c in pts])

    def residuals(x):
        params = CarModelParams(exp(x[0]), exp(x[1]), eta_s, eta_i, d_s, d_i)
        model = [car_model(params, p, pump, cw_window_ps) for p in powers]
        return np.asarray(model) - cars

    # scale guess: near the low-power end CAR+1 ~ 1/mu when darks are small
    p_lo, car_lo = min(pts)
    drive = PumpConfig(pump.mode, p_lo, pump.repetition_rate_ghz,
                       pump.duty_cycle, pump.center_wavelength_nm)
    pair_scale = mean_pairs_per_window(  # mu at gamma_combined = 1
        drive, ConversionParams(gamma_shg=1.0, gamma_spdc=1.0), cw_window_ps)
    gc0 = 1.0 / (max(car_lo, 1.0) * pair_scale)
    starts = ([np.log(init)] if init is not None
              else [[log(gc0), log(gn)] for gn in (1e2, 1e4, 1e6)])
    best = None
    for x0 in starts:
        res = optimize.least_squares(residuals, x0, max_nfev=max_nfev)
        if best is None or res.cost < best.cost:
            best = res
    params = CarModelParams(exp(best.x[0]), exp(best.x[1]), eta_s, eta_i, d_s, d_i)
    norm = float(np.linalg.norm(best.fun))
    if not best.success:
        raise FitError("CAR model fit did not converge", best=CarFit(params, norm))
    return CarFit(params, norm)


def car_peak(params: CarModelParams, pump: PumpConfig,
             p_lo_mw: float = 0.05, p_hi_mw: float = 20.0,
             cw_window_ps: float = 1000.0) -> tuple[float, float]:
    """Location and height of the CAR maximum over a power interval."""
    if not 0 < p_lo_mw < p_hi_mw:
        raise ValueError("need 0 < p_lo < p_hi")

    def neg(logp):
        return -car_model(params, exp(logp), pump, cw_window_ps)

    res = optimize.minimize_scalar(neg, bounds=(log(p_lo_mw), log(p_hi_mw)),
                                   method="bounded")
    return float(exp(res.x)), float(-res.fun)


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    prefactor: float
    exponent_err: float
    prefactor_err: float


def fit_power_law(data) -> PowerLawFit:
    """Log-log linear regression of y = prefactor * x^exponent."""
    pts = [(float(x), float(y)) for x, y in data]
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    if min(min(x, y) for x, y in pts) <= 0:
        raise ValueError("power-law fit needs positive data")
    lx = np.log([x for x, _ in pts])
    ly = np.log([y for _, y in pts])
    (slope, intercept), cov = np.polyfit(lx, ly, 1, cov=True)
    return PowerLawFit(
        exponent=float(slope),
        prefactor=float(exp(intercept)),
        exponent_err=float(sqrt(max(cov[0, 0], 0.0))),
        prefactor_err=float(exp(intercept) * sqrt(max(cov[1, 1], 0.0))),
    )
