"""Two-qubit polarization state algebra.

Conventions used across the whole package:

* Amplitude ordering is (HH, HV, VH, VV): index = 2*signal + idler with
  H=0, V=1.
* Diagonal basis: D = (H+V)/sqrt2, A = (H-V)/sqrt2.
* Circular basis: R = (H - iV)/sqrt2, L = (H + iV)/sqrt2 by default.  The
  opposite sign convention is selectable per setting; it only matters for
  the sign of the reconstructed phase, not for any rate prediction.

Analyzer settings are realized the way the physical analysis module works:
a quarter-wave plate, then a half-wave plate, then a horizontal polarizer.
The plate-angle table is data; projectors are computed from ideal Jones
matrices at those angles, so the table itself is under test.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

KET_ORDER = ("HH", "HV", "VH", "VV")

#: default circular-basis sign convention, R = (H - iV)/sqrt2
R_MINUS_IV = "R=(H-iV)/sqrt2"
#: alternate convention, R = (H + iV)/sqrt2
R_PLUS_IV = "R=(H+iV)/sqrt2"

#: (qwp_deg, hwp_deg) producing each analyzed basis element under the
#: default circular convention (light passes QWP first, then HWP, then an
#: H polarizer).
WAVEPLATE_ANGLES = {
    "H": (0.0, 0.0),
    "V": (0.0, 45.0),
    "D": (45.0, 22.5),
    "A": (45.0, -22.5),
    "R": (0.0, 22.5),
    "L": (0.0, -22.5),
}

#: named target states and their phase: |phi(theta)> for alpha = beta
PHASE_OF_TARGET = {
    "phi+": 0.0,
    "phi-": np.pi,
    "i+": np.pi / 2,  # (|HH> + i|VV>)/sqrt2
    "i-": -np.pi / 2,  # (|HH> - i|VV>)/sqrt2
}


def _rot(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


def waveplate(theta_rad: float, retardance_rad: float) -> np.ndarray:
    """Jones matrix of an ideal linear retarder with fast axis at theta."""
    return _rot(-theta_rad) @ np.diag([1.0, np.exp(1j * retardance_rad)]) @ _rot(theta_rad)


def analyzer_ket(qwp_deg: float, hwp_deg: float) -> np.ndarray:
    """Single-qubit state transmitted by QWP(q) -> HWP(h) -> H polarizer."""
    q = waveplate(np.radians(qwp_deg), np.pi / 2)
    h = waveplate(np.radians(hwp_deg), np.pi)
    ket = q.conj().T @ h.conj().T @ np.array([1.0, 0.0])
    # strip the global phase so tests can compare kets directly
    k = np.argmax(np.abs(ket))
    ket = ket * np.exp(-1j * np.angle(ket[k]))
    return ket


def basis_ket(label: str, convention: str = R_MINUS_IV) -> np.ndarray:
    """Ideal single-qubit ket for one analyzer basis element."""
    s = 1.0 / np.sqrt(2.0)
    kets = {
        "H": np.array([1.0, 0.0], dtype=complex),
        "V": np.array([0.0, 1.0], dtype=complex),
        "D": np.array([s, s], dtype=complex),
        "A": np.array([s, -s], dtype=complex),
        "R": np.array([s, -1j * s]),
        "L": np.array([s, 1j * s]),
    }
    if convention == R_PLUS_IV:
        kets["R"], kets["L"] = kets["L"], kets["R"]
    return kets[label]


@dataclass(frozen=True)
class ProjectionSetting:
    """Analyzer basis element per arm, e.g. ('H', 'V') or ('D', 'R')."""

    signal: str
    idler: str
    convention: str = R_MINUS_IV

    def __post_init__(self):
        for arm in (self.signal, self.idler):
            if arm not in WAVEPLATE_ANGLES:
                raise ValueError(f"unknown analyzer element {arm!r}")

    @property
    def label(self) -> str:
        return self.signal + self.idler


def _arm_ket(label: str, convention: str) -> np.ndarray:
    q, h = WAVEPLATE_ANGLES[label]
    if convention == R_PLUS_IV and label in ("R", "L"):
        # opposite circular sign: swap the two circular plate settings
        q, h = WAVEPLATE_ANGLES["L" if label == "R" else "R"]
    return analyzer_ket(q, h)


def projector(setting: ProjectionSetting) -> np.ndarray:
    """Rank-1 projector onto the two-arm analyzed state."""
    ket = np.kron(
        _arm_ket(setting.signal, setting.convention),
        _arm_ket(setting.idler, setting.convention),
    )
    return np.outer(ket, ket.conj())


def make_phase_state(alpha: float, beta: float, theta: float) -> np.ndarray:
    """Pure state alpha|HH> + e^{i theta} beta|VV> as a 4-amplitude vector."""
    if abs(alpha**2 + beta**2 - 1.0) > 1e-12:
        raise ValueError("alpha^2 + beta^2 must equal 1")
    return np.array([alpha, 0.0, 0.0, beta * np.exp(1j * theta)])


def pure_to_density(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def as_density(state: np.ndarray) -> np.ndarray:
    """Accept a 4-vector pure state or a 4x4 density matrix."""
    state = np.asarray(state, dtype=complex)
    if state.shape == (4,):
        return pure_to_density(state)
    if state.shape == (4, 4):
        return state
    raise ValueError(f"expected 4-vector or 4x4 matrix, got shape {state.shape}")


def validate_density(rho: np.ndarray, *, eig_tol: float = 1e-9) -> np.ndarray:
    """Check Hermiticity, unit trace and positivity; returns rho unchanged."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError("density matrix must be 4x4")
    if np.linalg.norm(rho - rho.conj().T) > 1e-10:
        raise ValueError("density matrix not Hermitian")
    if abs(np.trace(rho).real - 1.0) > 1e-10 or abs(np.trace(rho).imag) > 1e-10:
        raise ValueError("density matrix trace != 1")
    if np.linalg.eigvalsh(rho).min() < -eig_tol:
        raise ValueError("density matrix has a negative eigenvalue")
    return rho


def projection_probability(state: np.ndarray, setting: ProjectionSetting) -> float:
    """tr(rho . Pi_setting), clipped into [0, 1] against float round-off."""
    rho = as_density(state)
    p = np.trace(rho @ projector(setting)).real
    return float(np.clip(p, 0.0, 1.0))


def fidelity_to_pure(rho: np.ndarray, target: np.ndarray) -> float:
    """<psi|rho|psi> for a pure target."""
    rho = as_density(rho)
    psi = np.asarray(target, dtype=complex)
    return float(np.real(psi.conj() @ rho @ psi))


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """(1/2) tr |a - b|, the standard distinguishability metric."""
    diff = as_density(a) - as_density(b)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


def werner_mix(psi: np.ndarray, visibility: float) -> np.ndarray:
    """Depolarized state V |psi><psi| + (1-V) I/4.

    Fidelity to |psi> is (1 + 3V)/4, so V = 0.9333 lands at 0.95.
    """
    if not 0.0 <= visibility <= 1.0:
        raise ValueError("visibility must be in [0, 1]")
    return visibility * pure_to_density(psi) + (1.0 - visibility) * np.eye(4) / 4.0


def dephase(state: np.ndarray, p: float) -> np.ndarray:
    """Phase damping in the HV product basis: off-diagonals scaled by 1-p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("dephasing strength must be in [0, 1]")
    rho = as_density(state)
    diag = np.diag(np.diag(rho))
    return (1.0 - p) * rho + p * diag


def density_to_json(rho: np.ndarray) -> str:
    """Serialize row-major with [re, im] pairs (golden-file friendly)."""
    rho = np.asarray(rho, dtype=complex)
    data = [[float(z.real), float(z.imag)] for z in rho.reshape(-1)]
    return json.dumps({"rows": 4, "cols": 4, "data": data})


def density_from_json(text: str) -> np.ndarray:
    obj = json.loads(text)
    flat = np.array([complex(re, im) for re, im in obj["data"]])
    return flat.reshape(obj["rows"], obj["cols"])
