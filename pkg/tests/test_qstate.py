"""State algebra: phase states, projectors, fidelity, mixing channels."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sagnacsim import qstate
from sagnacsim.qstate import ProjectionSetting

S = 1.0 / np.sqrt(2.0)

#: complete orthonormal projector sets, one per analyzed basis
COMPLETE_SETS = (
    [("H", "H"), ("H", "V"), ("V", "H"), ("V", "V")],
    [("D", "D"), ("D", "A"), ("A", "D"), ("A", "A")],
    [("R", "R"), ("R", "L"), ("L", "R"), ("L", "L")],
)

ALL_LABELS = ("H", "V", "D", "A", "R", "L")


def random_density(rng):
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = m @ m.conj().T
    return rho / np.trace(rho).real


# --- phase states ---------------------------------------------------------------


def test_make_phase_state_theta_zero():
    psi = qstate.make_phase_state(S, S, 0.0)
    assert np.allclose(psi, [S, 0.0, 0.0, S], atol=1e-12)


def test_make_phase_state_theta_pi():
    psi = qstate.make_phase_state(S, S, np.pi)
    assert np.allclose(psi, [S, 0.0, 0.0, -S], atol=1e-12)


def test_make_phase_state_theta_half_pi():
    psi = qstate.make_phase_state(S, S, np.pi / 2)
    assert np.allclose(psi, [S, 0.0, 0.0, 1j * S], atol=1e-12)


def test_make_phase_state_rejects_unnormalized():
    with pytest.raises(ValueError):
        qstate.make_phase_state(0.8, 0.7, 0.0)


def test_named_phases_cover_the_four_targets():
    assert qstate.PHASE_OF_TARGET["phi+"] == 0.0
    assert qstate.PHASE_OF_TARGET["phi-"] == pytest.approx(np.pi)
    assert qstate.PHASE_OF_TARGET["i+"] == pytest.approx(np.pi / 2)
    assert qstate.PHASE_OF_TARGET["i-"] == pytest.approx(-np.pi / 2)


# --- projection probabilities -----------------------------------------------------


def test_projection_bell_hh():
    psi = qstate.make_phase_state(S, S, 0.0)
    assert qstate.projection_probability(psi, ProjectionSetting("H", "H")) == pytest.approx(0.5)


def test_projection_bell_da_dark_fringe():
    psi = qstate.make_phase_state(S, S, 0.0)
    p = qstate.projection_probability(psi, ProjectionSetting("D", "A"))
    assert p == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("theta", np.linspace(-np.pi, np.pi, 9))
def test_projection_dd_fringe(theta):
    psi = qstate.make_phase_state(S, S, theta)
    p = qstate.projection_probability(psi, ProjectionSetting("D", "D"))
    # independent oracle: explicit 4-amplitude inner product
    dd = np.kron(qstate.basis_ket("D"), qstate.basis_ket("D"))
    brute = abs(dd.conj() @ psi) ** 2
    assert p == pytest.approx((1.0 + np.cos(theta)) / 4.0, abs=1e-12)
    assert p == pytest.approx(brute, abs=1e-12)


def test_projection_complete_sets_sum_to_one():
    rng = np.random.default_rng(7)
    for _ in range(5):
        rho = random_density(rng)
        for group in COMPLETE_SETS:
            total = sum(qstate.projection_probability(rho, ProjectionSetting(s, i))
                        for s, i in group)
            assert total == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("theta", np.linspace(-np.pi, np.pi, 7))
def test_projection_circular_slice_is_half(theta):
    # P(R,L) + P(R,R) equals the R-signal marginal, 1/2 for any phase
    psi = qstate.make_phase_state(S, S, theta)
    p = (qstate.projection_probability(psi, ProjectionSetting("R", "L"))
         + qstate.projection_probability(psi, ProjectionSetting("R", "R")))
    assert p == pytest.approx(0.5, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(theta=st.floats(-10.0, 10.0))
def test_projection_phase_periodicity(theta):
    a = qstate.make_phase_state(S, S, theta)
    b = qstate.make_phase_state(S, S, theta + 2.0 * np.pi)
    for s in ALL_LABELS:
        for i in ALL_LABELS:
            setting = ProjectionSetting(s, i)
            assert qstate.projection_probability(a, setting) == pytest.approx(
                qstate.projection_probability(b, setting), abs=1e-10)


def test_projection_setting_rejects_unknown_label():
    with pytest.raises(ValueError):
        ProjectionSetting("H", "X")


# --- waveplate realization ---------------------------------------------------------


@pytest.mark.parametrize("label", ALL_LABELS)
def test_waveplate_angles_reproduce_basis_kets(label):
    q, h = qstate.WAVEPLATE_ANGLES[label]
    ket = qstate.analyzer_ket(q, h)
    overlap = abs(np.vdot(qstate.basis_ket(label), ket))
    assert overlap == pytest.approx(1.0, abs=1e-12)


def test_circular_convention_swap():
    # the opposite sign convention exchanges the two circular elements
    psi = qstate.make_phase_state(S, S, np.pi / 2)
    p_minus = qstate.projection_probability(psi, ProjectionSetting("R", "R"))
    p_plus = qstate.projection_probability(
        psi, ProjectionSetting("L", "L", qstate.R_PLUS_IV))
    assert p_minus == pytest.approx(p_plus, abs=1e-12)


# --- fidelity -----------------------------------------------------------------------


def test_fidelity_self():
    psi = qstate.make_phase_state(S, S, 0.0)
    assert qstate.fidelity_to_pure(qstate.pure_to_density(psi), psi) == pytest.approx(1.0)


def test_fidelity_orthogonal_bell_states():
    plus = qstate.make_phase_state(S, S, 0.0)
    minus = qstate.make_phase_state(S, S, np.pi)
    f = qstate.fidelity_to_pure(qstate.pure_to_density(plus), minus)
    assert f == pytest.approx(0.0, abs=1e-12)


def test_fidelity_maximally_mixed():
    rho = np.eye(4) / 4.0
    for theta in (0.0, np.pi, np.pi / 2):
        psi = qstate.make_phase_state(S, S, theta)
        assert qstate.fidelity_to_pure(rho, psi) == pytest.approx(0.25)


def test_trace_distance_extremes():
    plus = qstate.pure_to_density(qstate.make_phase_state(S, S, 0.0))
    minus = qstate.pure_to_density(qstate.make_phase_state(S, S, np.pi))
    assert qstate.trace_distance(plus, plus) == pytest.approx(0.0, abs=1e-12)
    assert qstate.trace_distance(plus, minus) == pytest.approx(1.0, abs=1e-12)


# --- mixing channels -----------------------------------------------------------------


def test_werner_pure_limit():
    psi = qstate.make_phase_state(S, S, 0.3)
    assert np.allclose(qstate.werner_mix(psi, 1.0), qstate.pure_to_density(psi))


def test_werner_fully_mixed_limit():
    psi = qstate.make_phase_state(S, S, 0.3)
    assert np.allclose(qstate.werner_mix(psi, 0.0), np.eye(4) / 4.0)


@pytest.mark.parametrize("v", [0.0, 0.25, 0.9333, 1.0])
def test_werner_fidelity_formula(v):
    psi = qstate.make_phase_state(S, S, np.pi / 2)
    f = qstate.fidelity_to_pure(qstate.werner_mix(psi, v), psi)
    assert f == pytest.approx((1.0 + 3.0 * v) / 4.0, abs=1e-12)


def test_werner_0933_reaches_p95_fidelity():
    psi = qstate.make_phase_state(S, S, 0.0)
    f = qstate.fidelity_to_pure(qstate.werner_mix(psi, 0.9333), psi)
    assert f == pytest.approx(0.95, abs=1e-4)


def test_werner_rejects_bad_visibility():
    psi = qstate.make_phase_state(S, S, 0.0)
    with pytest.raises(ValueError):
        qstate.werner_mix(psi, 1.1)


def test_dephase_kills_coherence():
    psi = qstate.make_phase_state(S, S, 0.0)
    rho = qstate.dephase(psi, 1.0)
    assert np.allclose(rho, np.diag([0.5, 0.0, 0.0, 0.5]), atol=1e-12)
    half = qstate.dephase(psi, 0.5)
    assert half[3, 0] == pytest.approx(0.25)
    assert half[0, 0] == pytest.approx(0.5)


def test_channel_outputs_stay_physical():
    rng = np.random.default_rng(11)
    psi = qstate.make_phase_state(S, S, 1.1)
    for v in rng.random(5):
        qstate.validate_density(qstate.werner_mix(psi, float(v)))
        qstate.validate_density(qstate.dephase(psi, float(v)))


# --- validation and serialization -----------------------------------------------------


def test_validate_density_catches_defects():
    with pytest.raises(ValueError):
        qstate.validate_density(np.eye(4) * 0.5)  # trace 2
    bad = np.diag([1.2, -0.2, 0.0, 0.0]).astype(complex)
    with pytest.raises(ValueError):
        qstate.validate_density(bad)
    lopsided = np.eye(4, dtype=complex) / 4.0
    lopsided[0, 1] = 0.3  # not Hermitian
    with pytest.raises(ValueError):
        qstate.validate_density(lopsided)


def test_as_density_accepts_both_forms():
    psi = qstate.make_phase_state(S, S, 0.0)
    rho = qstate.pure_to_density(psi)
    assert np.allclose(qstate.as_density(psi), rho)
    assert np.allclose(qstate.as_density(rho), rho)
    with pytest.raises(ValueError):
        qstate.as_density(np.zeros(3))


def test_density_json_round_trip():
    psi = qstate.make_phase_state(S, S, np.pi / 2)
    rho = qstate.werner_mix(psi, 0.77)
    back = qstate.density_from_json(qstate.density_to_json(rho))
    assert np.array_equal(back, rho)
