"""Shot-noise simulator of the four-core fiber setup.

Alice prepares ``|chi> ~ sum_j alpha_j e^{i phiA_j} |j>`` with amplitude and
phase modulators. Bob either analyses with modulators ``(beta, phiB)``
followed by the four-port coupler ``U4`` (dichotomic settings: detector 1
is ``b = 1``, detectors 2-4 are ``b = 0``), or sends the photon into the
seven-outcome POVM stage. Counts are Poissonian with mean ``shots * p``.

Analysis model: detector 1 projects onto the normalized
``|zeta_1> ~ sum_k beta_k e^{i phiB_k} |k>`` (first column of ``U4`` is
flat); detectors 2-4 project onto the Gram-Schmidt completion of the other
modulated ``U4`` columns. With ``beta = 1`` and zero phases this is exactly
``U4``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, NotRankOneError, ValidationError, ZeroStateError, ZeroTransmissionError
from .game import DIM, N_INPUTS, Strategy
from .mbs import builtin_matrices
from .quantum_core import Povm, hermitian_eigendecomposition
from .stats import POVM, PROJ, CountRecord, CountTable


def _four_reals(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.shape != (DIM,):
        raise DimensionMismatchError(f"{name} needs {DIM} entries, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class PreparationSetting:
    alpha: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        alpha = _four_reals(self.alpha, "alpha")
        if np.any(alpha < 0) or np.any(alpha > 1):
            raise ValidationError("transmissivities must lie in [0, 1]")
        if not np.any(alpha > 0):
            raise ZeroStateError("all preparation transmissivities are zero")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "phases", _four_reals(self.phases, "phases"))


@dataclass(frozen=True, eq=False)
class AnalysisSetting:
    beta: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        beta = _four_reals(self.beta, "beta")
        if np.any(beta < 0) or np.any(beta > 1):
            raise ValidationError("transmissivities must lie in [0, 1]")
        if not np.any(beta > 0):
            raise ZeroTransmissionError("all analysis transmissivities are zero")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "phases", _four_reals(self.phases, "phases"))


@dataclass(frozen=True)
class NoiseModel:
    """``mu`` only labels the source; the count scale is ``shots``."""

    mu: float = 0.2
    shots: int = 10_000
    visibility: float = 0.997
    phase_jitter: float = 0.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValidationError("mu must be positive")
        if self.shots < 1:
            raise ValidationError("shots must be >= 1")
        if not 0.0 <= self.visibility <= 1.0:
            raise ValidationError("visibility must lie in [0, 1]")
        if self.phase_jitter < 0:
            raise ValidationError("phase jitter must be nonnegative")


def _modulated(amplitudes: np.ndarray, phases: np.ndarray) -> np.ndarray:
    return amplitudes * np.exp(1j * phases)


def prepared_state(s: PreparationSetting) -> np.ndarray:
    v = _modulated(s.alpha, s.phases)
    return v / np.linalg.norm(v)


def _setting_from_ket(c: np.ndarray, tiny: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    c = np.asarray(c, dtype=complex).reshape(-1)
    mags = np.abs(c)
    if mags.max() <= tiny:
        raise ZeroStateError("zero vector has no modulator setting")
    phases = np.where(mags > tiny, np.angle(c), 0.0)
    return mags / mags.max(), phases


def settings_for_state(target) -> PreparationSetting:
    """Modulator setting preparing ``target`` up to normalization and global phase."""
    alpha, phases = _setting_from_ket(target)
    return PreparationSetting(alpha, phases)


def analysis_setting_for_projector(e1) -> AnalysisSetting:
    """Setting whose detector 1 projects onto the rank-1 ``E_{1|y}`` (a ket or a rank-1 projector)."""
    e1 = np.asarray(e1, dtype=complex)
    if e1.ndim == 2:
        w, v = hermitian_eigendecomposition(e1)
        if np.sum(w > 1e-8) != 1:
            raise NotRankOneError(f"E_1 has rank {int(np.sum(w > 1e-8))}, the analyser realizes rank 1 only")
        e1 = v[:, -1]
    beta, phases = _setting_from_ket(e1)
    return AnalysisSetting(beta, phases)


def analysis_basis(a: AnalysisSetting, tol: float = 1e-9) -> np.ndarray:
    """Orthonormal kets (columns) of detectors 1..4."""
    u4 = builtin_matrices()["U4"].matrix
    mod = _modulated(a.beta, a.phases)
    candidates = [2.0 * u4[:, j] * mod for j in range(DIM)]
    candidates += [u4[:, j] for j in range(1, DIM)] + list(np.eye(DIM, dtype=complex))
    basis = []
    for c in candidates:
        r = c.astype(complex)
        for b in basis:
            r = r - np.vdot(b, r) * b
        nrm = np.linalg.norm(r)
        if nrm > tol * max(1.0, np.linalg.norm(c)):
            basis.append(r / nrm)
        if len(basis) == DIM:
            break
    return np.column_stack(basis)


def projective_probs(state, a: AnalysisSetting) -> np.ndarray:
    """Detector probabilities of a dichotomic analysis setting."""
    state = np.asarray(state, dtype=complex).reshape(-1)
    if state.shape != (DIM,):
        raise DimensionMismatchError(f"state must have {DIM} amplitudes")
    nrm = np.linalg.norm(state)
    if nrm == 0:
        raise ZeroStateError("zero state")
    amps = analysis_basis(a).conj().T @ (state / nrm)
    return np.abs(amps) ** 2


def povm_probs(state, p: Povm) -> np.ndarray:
    state = np.asarray(state, dtype=complex).reshape(-1)
    if state.shape != (p.dim,):
        raise DimensionMismatchError(f"state of dimension {state.shape[0]} on a POVM of dimension {p.dim}")
    return np.clip(p.probabilities(state / np.linalg.norm(state)), 0.0, None)


def _contrast(p: np.ndarray, v: float) -> np.ndarray:
    p = p / p.sum()
    return v * p + (1.0 - v) / p.size


def _jittered(state: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    s = settings_for_state(state)
    if sigma > 0:
        s = PreparationSetting(s.alpha, s.phases + rng.normal(0.0, sigma, DIM))
    return prepared_state(s)


def simulate_counts(strategy: Strategy, noise: NoiseModel, rng) -> CountTable:
    """Count table for all 49 dichotomic and 7 POVM settings.

    Each setting draws from its own child stream of a seed sequence derived
    from ``rng`` (a Generator or an int), so tables are reproducible and
    settings are independent.
    """
    if isinstance(rng, np.random.Generator):
        seq = np.random.SeedSequence(rng.integers(0, 2**63, size=4).tolist())
    else:
        seq = np.random.SeedSequence(rng)
    streams = iter(np.random.default_rng(c) for c in seq.spawn(N_INPUTS * N_INPUTS + N_INPUTS))
    analysers = [analysis_setting_for_projector(m[1]) for m in strategy.dichotomic]
    records = []
    for x, psi in enumerate(strategy.states):
        for y in range(N_INPUTS):
            g = next(streams)
            p = _contrast(projective_probs(_jittered(psi, noise.phase_jitter, g), analysers[y]), noise.visibility)
            counts = g.poisson(noise.shots * p)
            records += [CountRecord(PROJ, x + 1, y + 1, j + 1, int(c)) for j, c in enumerate(counts)]
    for x, psi in enumerate(strategy.states):
        g = next(streams)
        p = _contrast(povm_probs(_jittered(psi, noise.phase_jitter, g), strategy.final), noise.visibility)
        counts = g.poisson(noise.shots * p)
        records += [CountRecord(POVM, x + 1, None, j + 1, int(c)) for j, c in enumerate(counts)]
    meta = {
        "shots_per_setting": noise.shots,
        "mu": noise.mu,
        "visibility": noise.visibility,
        "phase_jitter": noise.phase_jitter,
        "source": "simulation",
    }
    return CountTable(records, meta)
