"""Monte-Carlo synthesis of detector time-tag streams.

Emission is windowed: one window per pulse period (pulsed pump) or per
configurable slot (CW).  Per window the pair count is Poisson(mu) and each
pair's joint analyzer outcome is sampled from the scheduled two-qubit
state; background photons are unpolarized (pass any analyzer with
probability 1/2) and Poissonian, dark counts are a homogeneous Poisson
process, and every tag gets Gaussian jitter before dead-time filtering.

Windows are sampled sparsely: a batch of W windows draws its total photon
number ~ Poisson(rate * W) and assigns each photon a uniform window index,
which reproduces independent per-window Poisson counts exactly while
costing O(tags) rather than O(windows).  Each batch owns a counter-based
RNG substream keyed by (seed, batch index), so streams are bit-identical
for a fixed plan regardless of how many workers process the batches.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from hashlib import sha256

import numpy as np

from . import qstate
from .model import SourceConfig
from ._kernels import dead_time_mask

PS_PER_S = 1e12


class CapacityError(RuntimeError):
    """Run would exceed the configured tag-memory budget."""


@dataclass(frozen=True)
class DetectorModel:
    """Phenomenological single-photon detector.

    The detection stage of the loss chain already carries the detector
    quantum efficiency, so `efficiency` defaults to 1 and acts as an
    extra multiplier for what-if studies.
    """

    efficiency: float = 1.0
    dark_rate_hz: float = 300.0
    dead_time_ns: float = 1000.0
    jitter_rms_ps: float = 50.0

    def __post_init__(self):
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError("efficiency must be in (0, 1]")
        if min(self.dark_rate_hz, self.dead_time_ns, self.jitter_rms_ps) < 0:
            raise ValueError("detector parameters must be >= 0")


@dataclass(frozen=True)
class TimeTagStream:
    """Sorted detection events of one channel, int64 picoseconds."""

    channel: int
    times_ps: np.ndarray
    duration_s: float

    def __post_init__(self):
        t = np.ascontiguousarray(self.times_ps, dtype=np.int64)
        object.__setattr__(self, "times_ps", t)
        if len(t) > 1 and np.any(np.diff(t) < 0):
            raise ValueError("timestamps must be sorted ascending")

    def __len__(self) -> int:
        return len(self.times_ps)

    @property
    def rate_hz(self) -> float:
        return len(self.times_ps) / self.duration_s


@dataclass(frozen=True)
class WindowGate:
    """Periodic window mask: keep window w iff (w mod cycle) in a span."""

    cycle: int
    spans: tuple[tuple[int, int], ...]  # half-open [start, stop)

    def __post_init__(self):
        for start, stop in self.spans:
            if not 0 <= start < stop <= self.cycle:
                raise ValueError("gate span outside cycle")

    def mask(self, windows: np.ndarray) -> np.ndarray:
        phase = windows % self.cycle
        keep = np.zeros(len(windows), dtype=bool)
        for start, stop in self.spans:
            keep |= (phase >= start) & (phase < stop)
        return keep

    def fraction(self) -> float:
        return sum(stop - start for start, stop in self.spans) / self.cycle


@dataclass(frozen=True)
class RunPlan:
    """Complete, reproducible description of one simulated acquisition."""

    source: SourceConfig
    duration_s: float
    seed: int
    setting: tuple[str, str] | None = ("H", "H")
    alpha: float | None = None  # default: derived from the source config
    beta: float | None = None
    phase_schedule: tuple[tuple[float, int], ...] = ((0.0, 1),)
    werner_visibility: float = 1.0
    dephasing: float = 0.0
    detector_signal: DetectorModel = field(default_factory=DetectorModel)
    detector_idler: DetectorModel = field(default_factory=DetectorModel)
    tdc_jitter_ps: float = 4.2
    batch_windows: int = 1 << 20
    max_tags: int = 200_000_000
    gate: WindowGate | None = None

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration must be > 0")
        if not self.phase_schedule:
            raise ValueError("phase schedule must be nonempty")
        if self.batch_windows < 1:
            raise ValueError("batch size must be >= 1")

    def amplitudes(self) -> tuple[float, float]:
        if self.alpha is not None or self.beta is not None:
            if self.alpha is None or self.beta is None:
                raise ValueError("override alpha and beta together")
            return (self.alpha, self.beta)
        return self.source.state_amplitudes()


def phase_schedule_sample(schedule, window_index: int) -> float:
    """Phase active during one window; the schedule repeats cyclically."""
    if not schedule:
        raise ValueError("schedule must be nonempty")
    cycle = sum(n for _, n in schedule)
    k = window_index % cycle
    for theta, n in schedule:
        if k < n:
            return theta
        k -= n
    raise AssertionError("unreachable")


def derive_seed(root: int, *parts) -> int:
    """Named 64-bit substream seed from a root seed (stable across runs)."""
    h = sha256(repr((int(root),) + tuple(parts)).encode()).digest()
    return int.from_bytes(h[:8], "little")


# --- outcome tables ---------------------------------------------------------


def _scheduled_state(plan: RunPlan, theta: float) -> np.ndarray:
    alpha, beta = plan.amplitudes()
    psi = qstate.make_phase_state(alpha, beta, theta)
    rho = qstate.werner_mix(psi, plan.werner_visibility)
    return qstate.dephase(rho, plan.dephasing)


def _joint_pass_probs(plan: RunPlan, theta: float) -> np.ndarray:
    """Per-pair probabilities of (both, signal-only, idler-only, neither)."""
    if plan.setting is None:
        return np.array([1.0, 0.0, 0.0, 0.0])
    rho = _scheduled_state(plan, theta)
    a, b = plan.setting
    p11 = qstate.projection_probability(rho, qstate.ProjectionSetting(a, b))
    ka = qstate.basis_ket(a)
    kb = qstate.basis_ket(b)
    pa = float(np.real(np.trace(rho @ np.kron(np.outer(ka, ka.conj()), np.eye(2)))))
    pb = float(np.real(np.trace(rho @ np.kron(np.eye(2), np.outer(kb, kb.conj())))))
    p10 = pa - p11
    p01 = pb - p11
    p00 = 1.0 - p11 - p10 - p01
    return np.clip([p11, p10, p01, p00], 0.0, 1.0)


@dataclass(frozen=True)
class _Derived:
    """Plan quantities shared by all batches."""

    window_ps: float
    n_windows: int
    mu_window: float
    noise_window: float
    eta_s: float
    eta_i: float
    dark_s_per_window: float
    dark_i_per_window: float
    sigma_s_ps: float
    sigma_i_ps: float
    sched_idx: np.ndarray  # window phase -> schedule entry
    cum_outcomes: np.ndarray  # (n_entries, 3) categorical thresholds


def _derive(plan: RunPlan) -> _Derived:
    src = plan.source
    window_s = src.window_s()
    n_windows = int(np.ceil(plan.duration_s / window_s))
    eta_chain_s, eta_chain_i = src.efficiencies()
    thetas = [theta for theta, _ in plan.phase_schedule]
    sched_idx = np.concatenate(
        [np.full(n, k, dtype=np.int64) for k, (_, n) in enumerate(plan.phase_schedule)]
    )
    probs = np.stack([_joint_pass_probs(plan, theta) for theta in thetas])
    cum = np.cumsum(probs, axis=1)[:, :3]
    return _Derived(
        window_ps=window_s * PS_PER_S,
        n_windows=n_windows,
        mu_window=src.mean_pairs_window(),
        noise_window=src.mean_noise_window(),
        eta_s=eta_chain_s * plan.detector_signal.efficiency,
        eta_i=eta_chain_i * plan.detector_idler.efficiency,
        dark_s_per_window=plan.detector_signal.dark_rate_hz * window_s,
        dark_i_per_window=plan.detector_idler.dark_rate_hz * window_s,
        sigma_s_ps=float(np.hypot(plan.detector_signal.jitter_rms_ps, plan.tdc_jitter_ps)),
        sigma_i_ps=float(np.hypot(plan.detector_idler.jitter_rms_ps, plan.tdc_jitter_ps)),
        sched_idx=sched_idx,
        cum_outcomes=cum,
    )


def expected_tags(plan: RunPlan) -> float:
    """Rough expected total tag count (capacity guard, pre-dead-time)."""
    d = _derive(plan)
    per_window = (
        d.mu_window * (d.eta_s + d.eta_i)
        + 0.5 * d.noise_window * (d.eta_s + d.eta_i)
        + d.dark_s_per_window
        + d.dark_i_per_window
    )
    return per_window * d.n_windows


def _simulate_batch(plan: RunPlan, d: _Derived, batch: int):
    w0 = batch * plan.batch_windows
    nw = min(plan.batch_windows, d.n_windows - w0)
    span_ps = nw * d.window_ps
    t0_ps = w0 * d.window_ps
    rng = np.random.Generator(
        np.random.Philox(key=np.array([plan.seed & (2**64 - 1), batch], dtype=np.uint64))
    )
    cycle = len(d.sched_idx)

    # pairs: count, window, schedule phase, joint outcome, per-arm thinning.
    # Draw order is fixed; changing it breaks bit-reproducibility.
    k_pairs = rng.poisson(d.mu_window * nw)
    win = rng.integers(0, nw, k_pairs)
    u_out = rng.random(k_pairs)
    u_s = rng.random(k_pairs)
    u_i = rng.random(k_pairs)
    if plan.gate is not None:
        keep = plan.gate.mask(w0 + win)
        win, u_out, u_s, u_i = win[keep], u_out[keep], u_s[keep], u_i[keep]
    entry = d.sched_idx[(w0 + win) % cycle]
    outcome = (u_out[:, None] >= d.cum_outcomes[entry]).sum(axis=1)
    pass_s = (outcome == 0) | (outcome == 1)
    pass_i = (outcome == 0) | (outcome == 2)
    det_s = pass_s & (u_s < d.eta_s)
    det_i = pass_i & (u_i < d.eta_i)

    # background photons: polarizer (1/2) and chain thinning folded into the
    # Poisson mean (a thinned Poisson process is Poisson)
    k_ns = rng.poisson(0.5 * d.noise_window * d.eta_s * nw)
    win_ns = rng.integers(0, nw, k_ns)
    k_ni = rng.poisson(0.5 * d.noise_window * d.eta_i * nw)
    win_ni = rng.integers(0, nw, k_ni)

    k_ds = rng.poisson(d.dark_s_per_window * nw)
    t_ds = t0_ps + rng.random(k_ds) * span_ps
    k_di = rng.poisson(d.dark_i_per_window * nw)
    t_di = t0_ps + rng.random(k_di) * span_ps

    if plan.gate is not None:
        win_ns = win_ns[plan.gate.mask(w0 + win_ns)]
        win_ni = win_ni[plan.gate.mask(w0 + win_ni)]
        t_ds = t_ds[plan.gate.mask((t_ds // d.window_ps).astype(np.int64))]
        t_di = t_di[plan.gate.mask((t_di // d.window_ps).astype(np.int64))]

    center = 0.5 * d.window_ps
    t_sig = np.concatenate([
        (w0 + win[det_s]) * d.window_ps + center,
        (w0 + win_ns) * d.window_ps + center,
        t_ds,
    ])
    t_idl = np.concatenate([
        (w0 + win[det_i]) * d.window_ps + center,
        (w0 + win_ni) * d.window_ps + center,
        t_di,
    ])
    t_sig = t_sig + rng.normal(0.0, d.sigma_s_ps, len(t_sig))
    t_idl = t_idl + rng.normal(0.0, d.sigma_i_ps, len(t_idl))
    return t_sig, t_idl


def simulate_run(plan: RunPlan, threads: int = 1):
    """Run the full pipeline; returns (signal, idler) TimeTagStreams."""
    d = _derive(plan)
    budget = expected_tags(plan)
    if budget > plan.max_tags:
        raise CapacityError(
            f"expected ~{budget:.2e} tags exceeds budget {plan.max_tags:.2e}; "
            "shorten the run or raise max_tags"
        )
    n_batches = (d.n_windows + plan.batch_windows - 1) // plan.batch_windows
    if threads > 1 and n_batches > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: _simulate_batch(plan, d, b), range(n_batches)))
    else:
        parts = [_simulate_batch(plan, d, b) for b in range(n_batches)]

    streams = []
    for channel, det in ((0, plan.detector_signal), (1, plan.detector_idler)):
        t = np.concatenate([p[channel] for p in parts]) if parts else np.empty(0)
        t = np.sort(np.rint(t).astype(np.int64), kind="stable")
        t = t[t >= 0]
        dead_ps = int(round(det.dead_time_ns * 1000.0))
        if dead_ps > 0 and len(t):
            t = t[dead_time_mask(t, dead_ps)]
        streams.append(TimeTagStream(channel, t, plan.duration_s))
    return streams[0], streams[1]


def apply_dead_time(stream: TimeTagStream, dead_time_ns: float) -> TimeTagStream:
    """Greedy non-paralyzable dead time: keep iff >= dead after last kept."""
    t = stream.times_ps
    if len(t) > 1 and np.any(np.diff(t) < 0):
        raise ValueError("timestamps must be sorted ascending")
    dead_ps = int(round(dead_time_ns * 1000.0))
    if dead_ps <= 0 or len(t) == 0:
        return stream
    kept = t[dead_time_mask(t, dead_ps)]
    return TimeTagStream(stream.channel, kept, stream.duration_s)


# --- analytic expectations (used for calibration and test oracles) ----------


def window_intensities(plan: RunPlan) -> tuple[float, float, float]:
    """Schedule-averaged per-window detection intensities.

    Returns (lambda_signal, lambda_idler, lambda_joint): mean detected
    photons per window per arm, and mean true-coincidence pairs per
    window.  Dead time is not modeled here.
    """
    d = _derive(plan)
    weights = np.array([n for _, n in plan.phase_schedule], dtype=float)
    weights /= weights.sum()
    lam_s = lam_i = lam_c = 0.0
    for w, (theta, _) in zip(weights, plan.phase_schedule):
        p11, p10, p01, _ = _joint_pass_probs(plan, theta)
        lam_s += w * d.mu_window * (p11 + p10) * d.eta_s
        lam_i += w * d.mu_window * (p11 + p01) * d.eta_i
        lam_c += w * d.mu_window * p11 * d.eta_s * d.eta_i
    lam_s += 0.5 * d.noise_window * d.eta_s + d.dark_s_per_window
    lam_i += 0.5 * d.noise_window * d.eta_i + d.dark_i_per_window
    return lam_s, lam_i, lam_c


# --- tag stream serialization ------------------------------------------------

_RECORD = struct.Struct("<QB")


def write_tags_binary(stream: TimeTagStream, path) -> None:
    """Little-endian records of (u64 timestamp ps, u8 channel)."""
    rec = np.empty(len(stream.times_ps), dtype=[("t", "<u8"), ("ch", "u1")])
    rec["t"] = stream.times_ps
    rec["ch"] = stream.channel
    rec.tofile(path)


def read_tags_binary(path, duration_s: float | None = None) -> list[TimeTagStream]:
    """Read one tag file; returns one stream per channel id present."""
    rec = np.fromfile(path, dtype=[("t", "<u8"), ("ch", "u1")])
    streams = []
    for ch in np.unique(rec["ch"]):
        t = rec["t"][rec["ch"] == ch].astype(np.int64)
        dur = duration_s if duration_s is not None else float(t[-1] + 1) / PS_PER_S
        streams.append(TimeTagStream(int(ch), np.sort(t), dur))
    return streams


def write_tags_ndjson(stream: TimeTagStream, path) -> None:
    with open(path, "w") as fh:
        for t in stream.times_ps:
            fh.write(json.dumps({"t_ps": int(t), "ch": stream.channel}) + "\n")


def read_tags_ndjson(path, duration_s: float | None = None) -> list[TimeTagStream]:
    times: dict[int, list[int]] = {}
    with open(path) as fh:
        for line in fh:
            obj = json.loads(line)
            times.setdefault(int(obj["ch"]), []).append(int(obj["t_ps"]))
    streams = []
    for ch, ts in sorted(times.items()):
        t = np.sort(np.array(ts, dtype=np.int64))
        dur = duration_s if duration_s is not None else float(t[-1] + 1) / PS_PER_S
        streams.append(TimeTagStream(ch, t, dur))
    return streams
