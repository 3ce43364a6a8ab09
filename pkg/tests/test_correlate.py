"""Coincidence counting, CAR, visibility, and the fitting helpers."""

from dataclasses import replace
from math import sqrt

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import (
    IDEAL_DETECTOR,
    LOSSLESS,
    P_REF_MW,
    pulsed_source,
    with_mean_pairs,
    without_noise,
)
from sagnacsim import config, correlate
from sagnacsim import montecarlo as mc
from sagnacsim.model import ConversionParams, PumpConfig, SourceConfig, mean_pairs_per_window
from sagnacsim.montecarlo import DetectorModel, RunPlan, TimeTagStream


def stream(times, duration_s=1.0, channel=0):
    return TimeTagStream(channel, np.asarray(sorted(times), dtype=np.int64), duration_s)


def greedy_reference(ts, ti, half):
    """Quadratic-time earliest-compatible pairing, the counting oracle."""
    used = [False] * len(ti)
    c = 0
    for t in ts:
        for j, tj in enumerate(ti):
            if not used[j] and abs(tj - t) <= half:
                used[j] = True
                c += 1
                break
    return c


# --- window spec -------------------------------------------------------------


def test_spec_for_pulsed_pump_offsets_by_period():
    spec = correlate.CoincidenceWindowSpec.for_pump(PumpConfig("pulsed", 1.0, 1.0, 0.09))
    assert spec.mode == "adjacent-pulse"
    assert spec.offset_ps == pytest.approx(1000.0)
    three = correlate.CoincidenceWindowSpec.for_pump(
        PumpConfig("pulsed", 1.0, 2.0, 0.09), offset_periods=3)
    assert three.offset_ps == pytest.approx(1500.0)


def test_spec_for_cw_pump_uses_fixed_shift():
    spec = correlate.CoincidenceWindowSpec.for_pump(PumpConfig("cw", 1.0))
    assert spec.mode == "shifted-window"
    assert spec.offset_ps == pytest.approx(100_000.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        correlate.CoincidenceWindowSpec(width_ps=0.0)
    with pytest.raises(ValueError):
        correlate.CoincidenceWindowSpec(mode="nearest")
    with pytest.raises(ValueError):
        correlate.CoincidenceWindowSpec(offset_ps=0.0)


# --- counting ----------------------------------------------------------------


def test_identical_streams_all_coincide():
    t = np.arange(0, 10_000, 1000)
    spec = correlate.CoincidenceWindowSpec(width_ps=100.0)
    stats = correlate.count_coincidences(stream(t), stream(t, channel=1), spec)
    assert stats.coincidences == len(t)
    assert stats.singles_signal == stats.singles_idler == len(t)


def test_far_offset_streams_never_coincide():
    t = np.arange(0, 10_000, 1000)
    spec = correlate.CoincidenceWindowSpec(width_ps=10.0)
    stats = correlate.count_coincidences(stream(t), stream(t + 100, channel=1), spec)
    assert stats.coincidences == 0


def test_delay_recovers_shifted_pairs():
    t = np.arange(0, 10_000, 1000)
    spec = correlate.CoincidenceWindowSpec(width_ps=10.0)
    stats = correlate.count_coincidences(stream(t), stream(t + 100, channel=1),
                                         spec, delay_ps=100.0)
    assert stats.coincidences == len(t)


def test_window_edges_are_inclusive():
    spec = correlate.CoincidenceWindowSpec(width_ps=500.0)  # half width 250
    at = lambda dt: correlate.count_coincidences(
        stream([0]), stream([dt], channel=1), spec).coincidences
    assert at(250) == 1 and at(-250) == 1
    assert at(251) == 0 and at(-251) == 0


def test_count_matches_quadratic_oracle():
    rng = np.random.default_rng(11)
    spec = correlate.CoincidenceWindowSpec(width_ps=40.0)
    for _ in range(30):
        ts = np.sort(rng.integers(0, 2000, rng.integers(0, 60)))
        ti = np.sort(rng.integers(0, 2000, rng.integers(0, 60)))
        got = correlate.count_coincidences(stream(ts), stream(ti, channel=1), spec)
        assert got.coincidences == greedy_reference(ts.tolist(), ti.tolist(), 20)


def test_count_symmetric_under_stream_exchange():
    rng = np.random.default_rng(12)
    spec = correlate.CoincidenceWindowSpec(width_ps=300.0)
    for _ in range(20):
        ts = np.sort(rng.integers(0, 50_000, 400))
        ti = np.sort(rng.integers(0, 50_000, 300))
        a = correlate.count_coincidences(stream(ts), stream(ti, channel=1), spec)
        b = correlate.count_coincidences(stream(ti), stream(ts, channel=1), spec)
        assert a.coincidences == b.coincidences


def test_count_rejects_unsorted_times():
    bad = TimeTagStream.__new__(TimeTagStream)
    object.__setattr__(bad, "channel", 0)
    object.__setattr__(bad, "times_ps", np.array([5, 1], dtype=np.int64))
    object.__setattr__(bad, "duration_s", 1.0)
    spec = correlate.CoincidenceWindowSpec()
    with pytest.raises(ValueError):
        correlate.count_coincidences(bad, stream([1], channel=1), spec)


# --- stats container ---------------------------------------------------------


def test_stats_validation():
    with pytest.raises(ValueError):
        correlate.CoincidenceStats(11, 10, 100, 1.0)  # C > min singles
    with pytest.raises(ValueError):
        correlate.CoincidenceStats(-1, 10, 10, 1.0)
    with pytest.raises(ValueError):
        correlate.CoincidenceStats(1, 10, 10, 0.0)


def test_stats_derived_figures():
    s = correlate.CoincidenceStats(100, 1000, 2000, 2.0)
    assert s.rate_hz == pytest.approx(50.0)
    assert s.rate_err_hz == pytest.approx(5.0)
    assert s.singles_rate_signal_hz == pytest.approx(500.0)
    assert s.singles_rate_idler_hz == pytest.approx(1000.0)
    assert s.heralding_signal == pytest.approx(0.1)
    assert s.heralding_idler == pytest.approx(0.05)
    assert s.heralding_signal_err() == pytest.approx(0.1 * sqrt(1 / 100 + 1 / 1000))
    zero = correlate.CoincidenceStats(0, 10, 10, 1.0)
    assert zero.heralding_signal_err() == 0.0


# --- dead-time correction ----------------------------------------------------


def test_dead_time_zero_is_identity():
    s = correlate.CoincidenceStats(50, 900, 800, 1.0)
    assert correlate.dead_time_corrected(s, 0.0, 0.0) == s


def test_dead_time_correction_hand_case():
    s = correlate.CoincidenceStats(900, 180_000, 90_000, 2.0)
    out = correlate.dead_time_corrected(s, 2e-6, 1e-6)
    # live fractions 1 - 90e3*2e-6 = 0.82 and 1 - 45e3*1e-6 = 0.955
    assert out.singles_signal == pytest.approx(180_000 / 0.82)
    assert out.singles_idler == pytest.approx(90_000 / 0.955)
    assert out.coincidences == pytest.approx(900 / (0.82 * 0.955))
    assert out.duration_s == s.duration_s


def test_dead_time_correction_inverts_the_throttle():
    # a non-paralyzable detector registers r/(1 + r*tau); correcting the
    # measured rate must land back on r exactly
    r_true, tau, t = 250_000.0, 1e-6, 3.0
    r_meas = r_true / (1 + r_true * tau)
    s = correlate.CoincidenceStats(0, int(r_meas * t), int(r_meas * t), t)
    out = correlate.dead_time_corrected(s, tau, tau)
    assert out.singles_rate_signal_hz == pytest.approx(r_true, rel=1e-9)


def test_dead_time_correction_rejects_saturated_rate():
    s = correlate.CoincidenceStats(0, 1_000_000, 10, 1.0)
    with pytest.raises(ValueError):
        correlate.dead_time_corrected(s, 1e-6, 0.0)


# --- histogram ---------------------------------------------------------------


def test_histogram_empty_streams():
    centers, counts = correlate.coincidence_histogram(
        stream([]), stream([], channel=1), 500.0, 3000.0)
    assert centers.tolist() == list(range(-3000, 3500, 500))
    assert counts.sum() == 0


def test_histogram_rejects_bad_bin():
    with pytest.raises(ValueError):
        correlate.coincidence_histogram(stream([1]), stream([1], channel=1), 0.0, 100.0)


def test_histogram_single_pair_lands_in_one_bin():
    centers, counts = correlate.coincidence_histogram(
        stream([0]), stream([1200], channel=1), 500.0, 3000.0)
    assert counts.sum() == 1
    assert counts[centers.tolist().index(1000)] == 1


# --- measured CAR ------------------------------------------------------------


def test_car_of_uncorrelated_poisson_streams_is_zero():
    rng = np.random.default_rng(3)
    t_ps = 10**11  # 0.1 s
    ns, ni = rng.poisson(1e5), rng.poisson(1e5)
    sig = stream(rng.integers(0, t_ps, ns), 0.1)
    idl = stream(rng.integers(0, t_ps, ni), 0.1, channel=1)
    spec = correlate.CoincidenceWindowSpec(500.0, "shifted-window", 100_000.0)
    r = correlate.car_from_tags(sig, idl, spec)
    assert not r.censored
    assert abs(r.car) <= 3 * r.uncertainty


def test_car_of_clean_pulsed_source_near_inverse_mu():
    # mu = 0.01 pairs per window, no loss, noise, or darks: the measured
    # peak-to-offset ratio should sit at CAR = 1/mu - 1 = 99
    src = without_noise(replace(pulsed_source(1.0), loss=LOSSLESS))
    plan = RunPlan(source=with_mean_pairs(src, 0.01), duration_s=0.05, seed=6,
                   setting=None, detector_signal=IDEAL_DETECTOR,
                   detector_idler=IDEAL_DETECTOR, tdc_jitter_ps=0.0)
    sig, idl = mc.simulate_run(plan, threads=2)
    spec = correlate.CoincidenceWindowSpec.for_pump(plan.source.pump)
    r = correlate.car_from_tags(sig, idl, spec)
    assert not r.censored
    assert r.car == pytest.approx(99.0, abs=3 * r.uncertainty)


def test_clean_pulsed_histogram_structure():
    # same run as above: pairs pile up at zero delay, accidentals at
    # whole pulse periods, nothing in between (no jitter in this plan)
    src = without_noise(replace(pulsed_source(1.0), loss=LOSSLESS))
    plan = RunPlan(source=with_mean_pairs(src, 0.01), duration_s=0.05, seed=6,
                   setting=None, detector_signal=IDEAL_DETECTOR,
                   detector_idler=IDEAL_DETECTOR, tdc_jitter_ps=0.0)
    sig, idl = mc.simulate_run(plan, threads=2)
    centers, counts = correlate.coincidence_histogram(sig, idl, 500.0, 3000.0)
    on_period = centers % 1000 == 0
    assert counts[~on_period].sum() == 0
    peak = counts[centers.tolist().index(0)]
    sides = counts[on_period & (centers != 0)]
    assert np.all(sides > 0)
    assert peak > 50 * sides.max()
    # both arms fire at the same pulse centers, so the correlogram is even
    assert counts.tolist() == counts.tolist()[::-1]


def test_car_censored_when_no_accidentals():
    t = np.arange(0, 5_000_000, 1_000_000)
    spec = correlate.CoincidenceWindowSpec(width_ps=100.0, offset_ps=1000.0)
    r = correlate.car_from_tags(stream(t), stream(t, channel=1), spec)
    assert r.censored
    assert r.offset_counts == 0
    assert r.car == pytest.approx(len(t) - 1)


# --- analytic CAR model ------------------------------------------------------


def pulsed_pump(duty=0.09):
    return PumpConfig("pulsed", 1.0, 1.0, duty)


def test_car_model_noiseless_is_inverse_mu_minus_one():
    pump = pulsed_pump()
    for gc in (1e3, 1e5, 3e6):
        params = correlate.CarModelParams(gc, 0.0, 0.3, 0.2, 0.0, 0.0)
        conv = ConversionParams(gamma_shg=1.0, gamma_spdc=gc, gamma_noise=0.0)
        for p_mw in (0.1, 1.0, 4.0):
            drive = replace(pump, average_power_mw=p_mw)
            mu = mean_pairs_per_window(drive, conv, 1000.0)
            want = 1.0 / mu - 1.0
            assert correlate.car_model(params, p_mw, pump) == pytest.approx(want, rel=1e-12)


def test_car_model_ignores_common_efficiency_scale_when_clean():
    pump = pulsed_pump()
    a = correlate.CarModelParams(2e5, 0.0, 0.40, 0.30, 0.0, 0.0)
    b = correlate.CarModelParams(2e5, 0.0, 0.04, 0.03, 0.0, 0.0)
    for p_mw in (0.3, 1.7, 6.0):
        assert correlate.car_model(a, p_mw, pump) == pytest.approx(
            correlate.car_model(b, p_mw, pump), rel=1e-12)


def test_car_model_ratio_falls_to_zero_at_high_power():
    params = correlate.CarModelParams(6e6, 9e4, 0.066, 0.041, 3e-7, 3e-7)
    ratio = correlate.car_model(params, 1e6, pulsed_pump()) + 1.0
    assert 0.0 < ratio < 1e-6


def test_car_model_never_below_minus_one():
    params = correlate.CarModelParams(4e3, 5e4, 0.066, 0.041, 3e-7, 3e-7)
    for p_mw in np.geomspace(0.01, 1e4, 40):
        assert correlate.car_model(params, p_mw, pulsed_pump()) > -1.0


def test_car_model_undefined_when_everything_is_dark():
    params = correlate.CarModelParams(0.0, 0.0, 0.5, 0.5, 0.0, 0.0)
    with pytest.raises(ValueError):
        correlate.car_model(params, 1.0, pulsed_pump())


def test_car_params_mapping_requires_computational_basis():
    cfg = config.preset("car-sweep").source
    det = DetectorModel()
    with pytest.raises(ValueError):
        correlate.car_params_from_config(cfg, det, det, setting=("D", "D"))


def test_car_peak_is_an_interior_maximum():
    cfg = config.preset("car-sweep").source
    det = DetectorModel()
    params = correlate.car_params_from_config(cfg, det, det)
    p_pk, c_pk = correlate.car_peak(params, cfg.pump)
    assert 0.05 < p_pk < 20.0
    assert c_pk == pytest.approx(correlate.car_model(params, p_pk, cfg.pump), rel=1e-9)
    for p in (0.8 * p_pk, 1.25 * p_pk):
        assert correlate.car_model(params, p, cfg.pump) < c_pk
    with pytest.raises(ValueError):
        correlate.car_peak(params, cfg.pump, p_lo_mw=2.0, p_hi_mw=1.0)


# --- visibility and witness --------------------------------------------------


def test_visibility_perfect_and_flat():
    perfect = correlate.visibility((100.0, 0.0, 0.0, 100.0))
    assert perfect.visibility == pytest.approx(1.0)
    assert perfect.basis == "HV"
    flat = correlate.visibility((50.0, 50.0, 50.0, 50.0), basis="DA")
    assert flat.visibility == pytest.approx(0.0)
    assert flat.basis == "DA"


def test_visibility_hand_value_with_uncertainty():
    rec = correlate.visibility((90.0, 10.0, 10.0, 90.0))
    assert rec.visibility == pytest.approx(0.8)
    a, b = 180.0, 20.0
    assert rec.uncertainty == pytest.approx(2 * sqrt(b * b * a + a * a * b) / 200.0**2)


@given(st.tuples(*[st.integers(0, 10_000)] * 4))
def test_visibility_negates_under_co_cross_swap(counts):
    a, b, c, d = counts
    if a + b + c + d == 0:
        return
    v = correlate.visibility((a, b, c, d)).visibility
    swapped = correlate.visibility((b, a, d, c)).visibility
    assert swapped == pytest.approx(-v, abs=1e-12)


def test_visibility_rejects_bad_counts():
    with pytest.raises(ValueError):
        correlate.visibility((0.0, 0.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        correlate.visibility((1.0, -2.0, 3.0, 4.0))
    with pytest.raises(ValueError):
        correlate.visibility((1.0, 2.0, 3.0))


def test_fidelity_witness_values():
    assert correlate.fidelity_witness(0.995, 0.990) == pytest.approx(0.9925)
    assert correlate.fidelity_witness(1.0, 1.0) == pytest.approx(1.0)
    assert correlate.fidelity_witness(0.994, 0.977) == pytest.approx(0.9855)
    with pytest.raises(ValueError):
        correlate.fidelity_witness(1.2, 0.5)


# --- emitted-rate estimate ---------------------------------------------------


def test_estimate_emitted_identity_at_unit_efficiency():
    s = correlate.CoincidenceStats(400, 4000, 2000, 2.0)
    est = correlate.estimate_emitted(s, 1.0, 1.0)
    assert est.rate_hz == pytest.approx(s.rate_hz)
    assert est.heralding_signal == pytest.approx(s.heralding_signal)
    assert est.heralding_idler == pytest.approx(s.heralding_idler)


def test_estimate_emitted_divides_out_the_losses():
    s = correlate.CoincidenceStats(8027, 501_688, 276_793, 1.0)
    est = correlate.estimate_emitted(s, 0.066, 0.041)
    assert est.rate_hz == pytest.approx(8027 / (0.066 * 0.041))
    assert est.heralding_signal == pytest.approx(s.heralding_signal / 0.041)
    assert est.heralding_idler == pytest.approx(s.heralding_idler / 0.066)


def test_estimate_emitted_rejects_zero_efficiency():
    s = correlate.CoincidenceStats(10, 100, 100, 1.0)
    with pytest.raises(ValueError):
        correlate.estimate_emitted(s, 0.0, 0.5)


# --- fitting -----------------------------------------------------------------


def test_fit_car_model_recovers_exact_parameters():
    pump = pulsed_pump()
    true = correlate.CarModelParams(6e6, 9e4, 0.066, 0.041, 3e-7, 3e-7)
    powers = np.geomspace(0.3, 8.0, 7)
    data = [(p, correlate.car_model(true, p, pump)) for p in powers]
    fit = correlate.fit_car_model(data, pump, 0.066, 0.041, 3e-7, 3e-7)
    assert fit.params.gamma_combined == pytest.approx(true.gamma_combined, rel=1e-2)
    assert fit.params.gamma_noise == pytest.approx(true.gamma_noise, rel=1e-2)
    assert fit.residual_norm < 1e-6


def test_fit_car_model_reports_partial_result_on_failure():
    pump = pulsed_pump()
    true = correlate.CarModelParams(6e6, 9e4, 0.066, 0.041, 3e-7, 3e-7)
    data = [(p, correlate.car_model(true, p, pump)) for p in np.geomspace(0.3, 8, 5)]
    with pytest.raises(correlate.FitError) as info:
        correlate.fit_car_model(data, pump, 0.066, 0.041, 3e-7, 3e-7, max_nfev=1)
    assert info.value.best is not None
    assert info.value.best.params.gamma_combined > 0


def test_fit_car_model_needs_four_points():
    pump = pulsed_pump()
    with pytest.raises(ValueError):
        correlate.fit_car_model([(1.0, 10.0)] * 3, pump, 0.5, 0.5, 0.0, 0.0)


def test_fit_power_law_exact_quadratic():
    data = [(x, 3.0 * x**2) for x in (0.5, 1.0, 2.0, 4.0, 8.0)]
    fit = correlate.fit_power_law(data)
    assert fit.exponent == pytest.approx(2.0, abs=1e-9)
    assert fit.prefactor == pytest.approx(3.0, rel=1e-9)
    assert fit.exponent_err < 1e-9


def test_fit_power_law_exact_linear():
    data = [(x, 0.7 * x) for x in (1.0, 3.0, 9.0, 27.0)]
    fit = correlate.fit_power_law(data)
    assert fit.exponent == pytest.approx(1.0, abs=1e-9)
    assert fit.prefactor == pytest.approx(0.7, rel=1e-9)


def test_fit_power_law_rejections():
    with pytest.raises(ValueError):
        correlate.fit_power_law([(1.0, 1.0), (2.0, 4.0)])
    with pytest.raises(ValueError):
        correlate.fit_power_law([(1.0, 1.0), (2.0, 4.0), (3.0, 0.0)])


# --- end-to-end bench row ----------------------------------------------------


def test_reference_bench_row_half_duty():
    # 1 GHz pumping at 49 % duty and the anchor power: the full chain
    # (analyzer, loss, darks, dead time) lands on the recorded 963 cps
    src = SourceConfig(pump=PumpConfig("pulsed", P_REF_MW, 1.0, 0.49))
    plan = RunPlan(source=src, duration_s=3.0, seed=21, setting=("H", "H"))
    sig, idl = mc.simulate_run(plan, threads=4)
    spec = correlate.CoincidenceWindowSpec.for_pump(src.pump)
    stats = correlate.count_coincidences(sig, idl, spec)
    assert stats.rate_hz == pytest.approx(963.0, rel=0.10)
    corrected = correlate.dead_time_corrected(stats, 1e-6, 1e-6)
    assert corrected.coincidences > stats.coincidences
    assert corrected.singles_rate_signal_hz > stats.singles_rate_signal_hz
