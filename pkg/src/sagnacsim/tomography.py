"""Two-qubit state tomography: simulation, linear inversion, MLE.

The default projection set is {H, V, D, R} x {H, V, D, R}, realized with
the same waveplate model used everywhere else.  Linear inversion expands
rho in the orthonormal Pauli-product basis and solves the (possibly
overdetermined) linear system; the physical-state estimate re-fits the
counts under a Poisson likelihood over the Cholesky-style factorization
rho = T T† / tr(T T†), which is physical by construction.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import qstate
from .qstate import ProjectionSetting

DEFAULT_LABELS = ("H", "V", "D", "R")

_PAULI = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
# orthonormal Hermitian basis: tr(G_a G_b) = delta_ab, G_0 = I/2
_GENERATORS = [np.kron(a, b) / 2.0 for a in _PAULI for b in _PAULI]


def default_settings(convention: str = qstate.R_MINUS_IV) -> tuple[ProjectionSetting, ...]:
    return tuple(
        ProjectionSetting(s, i, convention)
        for s in DEFAULT_LABELS for i in DEFAULT_LABELS
    )


@dataclass(frozen=True)
class TomographyRecord:
    """Integrated coincidence counts for one projection-setting sweep."""

    entries: tuple[tuple[ProjectionSetting, float, float], ...]  # setting, counts, s

    def __post_init__(self):
        for _, counts, seconds in self.entries:
            if counts < 0 or seconds < 0:
                raise ValueError("counts and integration time must be >= 0")

    def settings(self) -> list[ProjectionSetting]:
        return [s for s, _, _ in self.entries]

    def counts(self) -> np.ndarray:
        return np.array([c for _, c, _ in self.entries], dtype=float)

    def seconds(self) -> np.ndarray:
        return np.array([t for _, _, t in self.entries], dtype=float)


def simulate_tomography(state, rate_cps: float, time_per_setting_s: float,
                        seed: int, settings=None) -> TomographyRecord:
    """Poisson counts for each setting: n ~ Poisson(rate * time * tr(rho Pi))."""
    if rate_cps <= 0:
        raise ValueError("rate must be > 0")
    if time_per_setting_s < 0:
        raise ValueError("integration time must be >= 0")
    rho = qstate.as_density(state)
    if settings is None:
        settings = default_settings()
    rng = np.random.Generator(np.random.Philox(np.uint64(seed)))
    entries = []
    for s in settings:
        mean = rate_cps * time_per_setting_s * qstate.projection_probability(rho, s)
        entries.append((s, float(rng.poisson(mean)), time_per_setting_s))
    return TomographyRecord(tuple(entries))


def _probe_matrix(settings) -> np.ndarray:
    """A[nu, j] = tr(Pi_nu G_j); real because both factors are Hermitian."""
    rows = []
    for s in settings:
        pi = qstate.projector(s)
        rows.append([float(np.trace(pi @ g).real) for g in _GENERATORS])
    return np.array(rows)


def linear_reconstruct(rec: TomographyRecord) -> np.ndarray:
    """Linear-inversion estimate; Hermitian with unit trace, possibly
    indefinite at finite counts.

    Solves counts/time = c * A s for the Pauli components s with the
    overall scale c eliminated through tr(rho) = 1, so no particular
    normalization subset of settings is required.
    """
    a = _probe_matrix(rec.settings())
    if np.linalg.matrix_rank(a) < 16:
        raise ValueError("setting set is not tomographically complete")
    y = rec.counts() / np.where(rec.seconds() > 0, rec.seconds(), 1.0)
    if np.all(y == 0):
        raise ValueError("all counts are zero: no scale information")
    u, *_ = np.linalg.lstsq(a, y, rcond=None)
    if u[0] <= 0:
        raise ValueError("nonpositive total-rate component: degenerate data")
    s = u / (2.0 * u[0])  # enforce s_0 = 1/2, i.e. unit trace
    rho = sum(sj * g for sj, g in zip(s, _GENERATORS))
    return (rho + rho.conj().T) / 2.0


def project_to_physical(rho: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Nearest-ish physical state: clip eigenvalues up to a small floor."""
    vals, vecs = np.linalg.eigh(qstate.as_density(rho))
    vals = np.clip(vals.real, floor, None)
    vals /= vals.sum()
    return (vecs * vals) @ vecs.conj().T


# --- maximum likelihood -------------------------------------------------------

_TRIL = np.tril_indices(4, k=-1)


def _params_to_rho(x: np.ndarray) -> np.ndarray:
    t = np.zeros((4, 4), dtype=complex)
    t[np.diag_indices(4)] = x[:4]
    t[_TRIL] = x[4:10] + 1j * x[10:16]
    rho = t @ t.conj().T
    tr = np.trace(rho).real
    if tr <= 0:
        return np.eye(4, dtype=complex) / 4.0
    return rho / tr


def _rho_to_params(rho: np.ndarray) -> np.ndarray:
    # jitter keeps the factorization defined for singular (pure-ish) states
    t = np.linalg.cholesky(rho + 1e-9 * np.eye(4))
    x = np.empty(16)
    x[:4] = np.diag(t).real
    x[4:10] = t[_TRIL].real
    x[10:16] = t[_TRIL].imag
    return x


@dataclass(frozen=True)
class MleConfig:
    tolerance: float = 1e-10
    max_iterations: int = 4000
    initial_guess: str = "linear"  # "linear" (eigen-projected) or "mixed"
    low_count_warning: float = 10.0

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")


class MleError(RuntimeError):
    """Optimizer failed to improve on the initial guess; carries diagnostics."""

    def __init__(self, message, rho=None, objective=None):
        super().__init__(message)
        self.rho = rho
        self.objective = objective


def _poisson_deviance_parts(counts, model):
    model = np.clip(model, 1e-300, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        logterm = np.where(counts > 0, counts * np.log(counts / model), 0.0)
    # analytically >= 0 termwise; clamp rounding noise so sqrt stays real
    return np.clip(2.0 * (model - counts + logterm), 0.0, None)


def mle_reconstruct(rec: TomographyRecord, cfg: MleConfig = MleConfig()) -> np.ndarray:
    """Physical density matrix maximizing the Poisson likelihood.

    Expected counts are s * t_nu * tr(rho Pi_nu) with the scale s
    profiled out analytically at every step; the optimizer sees only the
    16 factorization parameters.  The result never scores worse than the
    initial guess.
    """
    counts = rec.counts()
    seconds = rec.seconds()
    if counts.min() < cfg.low_count_warning:
        warnings.warn("settings with fewer than 10 counts: Poisson MLE still "
                      "valid but uncertainties are non-Gaussian", stacklevel=2)
    probes = np.stack([qstate.projector(s) for s in rec.settings()])

    def intensities(rho):
        p = np.einsum("nij,ji->n", probes, rho).real
        p = np.clip(p, 1e-12, None) * seconds
        scale = counts.sum() / p.sum()
        return scale * p

    def deviance(x):
        return float(_poisson_deviance_parts(counts, intensities(_params_to_rho(x))).sum())

    if cfg.initial_guess == "mixed":
        rho0 = np.eye(4, dtype=complex) / 4.0
    else:
        rho0 = project_to_physical(linear_reconstruct(rec))
    x0 = _rho_to_params(rho0)
    best_x, best_f = x0, deviance(x0)

    def residuals(x):
        return np.sqrt(_poisson_deviance_parts(counts, intensities(_params_to_rho(x))))

    res = optimize.least_squares(residuals, x0, xtol=cfg.tolerance, ftol=cfg.tolerance,
                                 gtol=cfg.tolerance, max_nfev=cfg.max_iterations)
    if res.success and deviance(res.x) < best_f:
        best_x, best_f = res.x, deviance(res.x)
    else:
        # ill-conditioned least squares: derivative-free restart
        simplex = optimize.minimize(deviance, best_x, method="Nelder-Mead",
                                    options={"maxiter": cfg.max_iterations,
                                             "fatol": cfg.tolerance, "xatol": 1e-8})
        if simplex.fun < best_f:
            best_x, best_f = simplex.x, float(simplex.fun)
        elif not res.success:
            raise MleError("MLE did not improve on the initial guess",
                           rho=_params_to_rho(best_x), objective=best_f)
    rho = _params_to_rho(best_x)
    qstate.validate_density(rho)
    return rho


# --- reporting and serialization ----------------------------------------------


def target_states() -> dict[str, np.ndarray]:
    """The four phase-switched Bell-type targets, |HH> + e^{i theta}|VV>."""
    amp = 1.0 / np.sqrt(2.0)
    return {
        name: qstate.make_phase_state(amp, amp, theta)
        for name, theta in qstate.PHASE_OF_TARGET.items()
    }


def density_matrix_report(rho: np.ndarray, targets: dict | None = None) -> dict:
    """Real/imaginary grids, fidelities to the targets, and the phase of
    the <VV|rho|HH> coherence as the state-phase estimate."""
    rho = qstate.as_density(rho)
    if targets is None:
        targets = target_states()
    return {
        "real": [[float(z.real) for z in row] for row in rho],
        "imag": [[float(z.imag) for z in row] for row in rho],
        "fidelities": {name: qstate.fidelity_to_pure(rho, psi)
                       for name, psi in targets.items()},
        "phase_rad": float(np.angle(rho[3, 0])),
        "purity": float(np.trace(rho @ rho).real),
    }


def write_report_json(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")


def write_record_csv(rec: TomographyRecord, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["setting", "counts", "seconds"])
        for setting, counts, seconds in rec.entries:
            writer.writerow([setting.label, f"{counts:.0f}", repr(seconds)])


def read_record_csv(path, convention: str = qstate.R_MINUS_IV) -> TomographyRecord:
    entries = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            label = row["setting"].strip()
            if len(label) != 2:
                raise ValueError(f"setting label must be two characters: {label!r}")
            setting = ProjectionSetting(label[0], label[1], convention)
            entries.append((setting, float(row["counts"]), float(row["seconds"])))
    return TomographyRecord(tuple(entries))
