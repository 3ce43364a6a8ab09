"""Electro-optic phase switching: voltages, pulse patterns, schedules.

The modulator acts on one of the two frequency-doubled pulses that
counter-propagate through the loop with a relative delay, so the sign of
the applied phase transfers directly when the early pulse is hit and
inverts when the late pulse is hit.  Amplifier gain is treated as a
calibration constant anchored so the largest programmed voltage step
reaches exactly V_pi; the nominal gain figure of the RF chain is only
approximate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ._kernels import match_indices
from .model import SourceConfig
from .montecarlo import DetectorModel, RunPlan, TimeTagStream, WindowGate, derive_seed
from .qstate import PHASE_OF_TARGET, make_phase_state

# generator-side peak voltages programmed for the four named states (V);
# positive voltage on the late pulse gives a negative state phase
PRESET_VOLTAGES_V = {
    "phi+": 0.0,
    "phi-": 0.250,
    "i+": -0.1125,
    "i-": 0.1125,
}


def calibrated_gain_db(v_pi_volts: float = 4.0, anchor_volts: float = 0.250) -> float:
    """Voltage gain putting the anchor step exactly at V_pi (about 24 dB)."""
    return 20.0 * math.log10(v_pi_volts / anchor_volts)


@dataclass(frozen=True)
class ModulatorParams:
    v_pi_volts: float = 4.0
    amplifier_gain_db: float = calibrated_gain_db()
    insertion_loss_db: float = 3.5
    band_hz: tuple[float, float] = (50e3, 2e9)

    def __post_init__(self):
        if self.v_pi_volts <= 0:
            raise ValueError("V_pi must be > 0")
        if not self.band_hz[0] < self.band_hz[1]:
            raise ValueError("band must be (low, high)")

    def transmission(self) -> float:
        return 10.0 ** (-self.insertion_loss_db / 10.0)


@dataclass(frozen=True)
class EomPulsePattern:
    """Periodic drive: one programmed peak voltage per repetition slot.

    `pulse_delay_s` is the arrival-time offset between the two
    counter-propagating frequency-doubled pulses at the modulator and
    must stay below the optical period; the electrical pulse must fit
    inside that delay or it would modulate both pulses at once.
    """

    slot_voltages_v: tuple[float, ...]
    repetition_rate_hz: float = 100e6
    duty_cycle: float = 0.05
    target: str = "late"
    pulse_delay_s: float = 2e-9
    optical_period_s: float = 10e-9

    def __post_init__(self):
        if not self.slot_voltages_v:
            raise ValueError("pattern needs at least one slot")
        if not all(math.isfinite(v) for v in self.slot_voltages_v):
            raise ValueError("voltages must be finite")
        if not 0.0 < self.duty_cycle <= 1.0:
            raise ValueError("duty cycle must be in (0, 1]")
        if self.target not in ("early", "late"):
            raise ValueError("target must be 'early' or 'late'")
        if self.repetition_rate_hz <= 0:
            raise ValueError("repetition rate must be > 0")
        if not self.pulse_delay_s < self.optical_period_s:
            raise ValueError("pulse delay must be below the optical period")

    def electrical_width_s(self) -> float:
        return self.duty_cycle / self.repetition_rate_hz

    def covers_pulse(self, optical_duty: float) -> bool:
        """True when the electrical pulse spans the whole optical pulse."""
        return self.electrical_width_s() >= optical_duty / self.repetition_rate_hz


@dataclass(frozen=True)
class StateSchedule:
    """Ordered phases of the emitted state, |HH> + e^{i theta}|VV> scaled
    by (alpha, beta), each held for a number of emission windows."""

    alpha: float
    beta: float
    entries: tuple[tuple[float, int], ...]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("schedule must be nonempty")
        if any(n < 1 for _, n in self.entries):
            raise ValueError("each entry must cover at least one window")
        make_phase_state(self.alpha, self.beta, 0.0)  # validates normalization

    def cycle_windows(self) -> int:
        return sum(n for _, n in self.entries)

    def fractions(self) -> tuple[float, ...]:
        cycle = self.cycle_windows()
        return tuple(n / cycle for _, n in self.entries)

    def states(self):
        return [make_phase_state(self.alpha, self.beta, theta)
                for theta, _ in self.entries]


def wrap_phase(theta: float) -> float:
    """Wrap to the principal interval (-pi, pi]."""
    w = math.fmod(theta + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


def voltage_to_phase(v_generator: float, params: ModulatorParams) -> float:
    """Phase applied to the modulated pulse: pi * V_amplified / V_pi."""
    v = v_generator * 10.0 ** (params.amplifier_gain_db / 20.0)
    return wrap_phase(math.pi * v / params.v_pi_volts)


def pattern_to_state_sequence(pattern: EomPulsePattern, params: ModulatorParams,
                              alpha: float, beta: float,
                              windows_per_slot: int = 1) -> StateSchedule:
    """State phase per slot: +theta on the early pulse, -theta on the late."""
    if pattern.electrical_width_s() > pattern.pulse_delay_s:
        raise ValueError("electrical pulse spans both optical pulses: "
                         "targeting is ambiguous")
    sign = 1.0 if pattern.target == "early" else -1.0
    entries = tuple(
        (wrap_phase(sign * voltage_to_phase(v, params)), windows_per_slot)
        for v in pattern.slot_voltages_v
    )
    return StateSchedule(alpha, beta, entries)


def preset_pattern(names=("phi+", "phi-", "i+", "i-"), **kwargs) -> EomPulsePattern:
    """Pattern cycling through named target states, one slot each."""
    try:
        voltages = tuple(PRESET_VOLTAGES_V[n] for n in names)
    except KeyError as err:
        raise ValueError(f"unknown preset state: {err.args[0]!r}") from None
    return EomPulsePattern(slot_voltages_v=voltages, **kwargs)


def apply_insertion_loss(cfg: SourceConfig, params: ModulatorParams) -> SourceConfig:
    """Attenuate the frequency-doubled light by the modulator loss.

    Both propagation directions traverse the modulator, so the loss
    scales both conversion stages equally and the state stays balanced.
    """
    t = params.transmission()
    return replace(
        cfg,
        conversion=replace(cfg.conversion, gamma_shg=cfg.conversion.gamma_shg * t),
        gamma_shg_wg2=cfg.gamma_shg_wg2 * t,
    )


def schedule_verification_plan(schedule: StateSchedule, source: SourceConfig,
                               duration_s: float, seed: int,
                               setting=("H", "H"),
                               werner_visibility: float = 1.0,
                               dephasing: float = 0.0,
                               detector_signal: DetectorModel = DetectorModel(),
                               detector_idler: DetectorModel = DetectorModel()):
    """One gated RunPlan per distinct scheduled state.

    All plans share the full phase schedule; each gate keeps exactly the
    windows of its own state, so the gates partition every cycle.
    """
    cycle = schedule.cycle_windows()
    spans_by_theta: dict[float, list[tuple[int, int]]] = {}
    start = 0
    for theta, n in schedule.entries:
        spans_by_theta.setdefault(theta, []).append((start, start + n))
        start += n
    plans = []
    for k, (theta, spans) in enumerate(spans_by_theta.items()):
        plans.append(RunPlan(
            source=source,
            duration_s=duration_s,
            seed=derive_seed(seed, "state", k),
            setting=setting,
            alpha=schedule.alpha,
            beta=schedule.beta,
            phase_schedule=schedule.entries,
            werner_visibility=werner_visibility,
            dephasing=dephasing,
            detector_signal=detector_signal,
            detector_idler=detector_idler,
            gate=WindowGate(cycle, tuple(spans)),
        ))
    return plans


def classify_coincidences(signal: TimeTagStream, idler: TimeTagStream,
                          schedule: StateSchedule, window_ps: float,
                          width_ps: float = 500.0,
                          delay_ps: float = 0.0) -> np.ndarray:
    """Coincidence count per schedule entry for a run cycling through it.

    Each matched pair is attributed to the emission window of its signal
    tag; the window index modulo the schedule cycle selects the owning
    entry.  Entries are counted separately even if they share a phase.
    """
    ts = np.ascontiguousarray(signal.times_ps, dtype=np.int64)
    ti = np.ascontiguousarray(idler.times_ps, dtype=np.int64)
    shift = int(round(delay_ps))
    half = int(round(width_ps / 2))
    idx_s, _ = match_indices(ts, ti - shift if shift else ti, half)
    owner = np.repeat(np.arange(len(schedule.entries)),
                      [n for _, n in schedule.entries])
    phase = (ts[idx_s] // int(round(window_ps))) % schedule.cycle_windows()
    return np.bincount(owner[phase], minlength=len(schedule.entries))


def preset_phase(name: str) -> float:
    """Ideal phase of a named target state."""
    return PHASE_OF_TARGET[name]
