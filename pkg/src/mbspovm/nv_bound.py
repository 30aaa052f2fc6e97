"""Upper bound on the score of projective strategies in dimension four.

Sampled moment matrices (Navascues-Vertesi style): Gram matrices
``Gamma[u, v] = tr(u^dagger v)`` of operator words evaluated on random
projective realizations in d = 4 span a linear space that contains every
d = 4 projective moment matrix. Maximizing the score over PSD matrices in
that span, with the normalization ``tr(psi_x) = 1``, bounds W from above.

The score is invariant under relabeling inputs 1..4 together with the
outcomes of the basis measurement, so every sample is averaged over S4
before it enters the span, which shrinks the span considerably. Realizations
are closed under complex conjugation and the score is real, so by default
only the real part of each moment matrix is kept.
"""
from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import BudgetExhaustedWarning, SolverNotConverged, ValidationError
from .game import DIM, N_INPUTS
from .quantum_core import haar_unitary, ket_to_density, random_ket
from .sdp import solve_lmi

log = logging.getLogger(__name__)

N_BASIS = 4
SATURATION_WINDOW = 50
RANK_TOL = 1e-7


class Letter(NamedTuple):
    """``kind`` is ``"psi"``, ``"E"`` (meaning ``E_{1|y}``) or ``"phi"``; ``label`` is 0-based."""

    kind: str
    label: int

    def __str__(self):
        return f"{self.kind}{self.label + 1}"


Word = tuple  # of Letter; () is the identity


def word_name(w: Word) -> str:
    return "1" if not w else "*".join(str(letter) for letter in w)


WORD_SETS = ("full", "diagonal")


@lru_cache(maxsize=None)
def level_words(word_set: str = "full") -> tuple:
    """Monomials of the relaxation.

    Both sets contain ``1``, ``psi_x``, ``E_{1|y}``, ``phi_b`` and
    ``psi_x E_{1|y}``. ``"full"`` adds ``psi_x phi_b`` for all x and b,
    ``"diagonal"`` only ``psi_x phi_x`` for x <= 4. ``E_{0|y}`` words are
    affinely dependent on these and are left out.
    """
    if word_set not in WORD_SETS:
        raise ValidationError(f"unknown word set {word_set!r}; choose from {WORD_SETS}")
    psi = [Letter("psi", x) for x in range(N_INPUTS)]
    e = [Letter("E", y) for y in range(N_INPUTS)]
    phi = [Letter("phi", b) for b in range(N_BASIS)]
    words = [()] + [(p,) for p in psi] + [(q,) for q in e] + [(f,) for f in phi]
    words += [(p, q) for p in psi for q in e]
    if word_set == "full":
        words += [(p, f) for p in psi for f in phi]
    else:
        words += [(psi[x], phi[x]) for x in range(N_BASIS)]
    return tuple(words)


@dataclass(frozen=True, eq=False)
class Realization:
    """Rank-1 state projectors, projectors ``E_{1|y}`` and a rank-1 orthonormal basis measurement."""

    states: tuple
    projectors: tuple
    basis: tuple

    def operator(self, w: Word) -> np.ndarray:
        out = np.eye(DIM, dtype=complex)
        table = {"psi": self.states, "E": self.projectors, "phi": self.basis}
        for letter in w:
            out = out @ table[letter.kind][letter.label]
        return out

    def score(self) -> float:
        """Game score with final measurement ``(phi_1, .., phi_4, 0, 0, 0)``."""
        w = 0.0
        for x, rho in enumerate(self.states):
            for y, e in enumerate(self.projectors):
                p1 = float(np.real(np.trace(rho @ e)))
                w += 2 * p1 if x == y else 1 - p1
            if x < N_BASIS:
                w += 3 * float(np.real(np.trace(rho @ self.basis[x])))
        return w


def random_realization(rng: np.random.Generator) -> Realization:
    """Haar states, projectors of uniformly random rank 0..4 with Haar eigenbasis, Haar basis measurement."""
    states = tuple(ket_to_density(random_ket(rng, DIM)) for _ in range(N_INPUTS))
    projectors = []
    for _ in range(N_INPUTS):
        k = int(rng.integers(0, DIM + 1))
        u = haar_unitary(rng, DIM)[:, :k]
        projectors.append(u @ u.conj().T)
    u = haar_unitary(rng, DIM)
    basis = tuple(ket_to_density(u[:, b]) for b in range(N_BASIS))
    return Realization(states, tuple(projectors), basis)


def moment_matrix(r: Realization, word_set: str = "full") -> np.ndarray:
    """``Gamma[u, v] = tr(u^dagger v)`` over :func:`level_words`."""
    ops = np.array([r.operator(w).reshape(-1) for w in level_words(word_set)])
    g = ops.conj() @ ops.T
    return 0.5 * (g + g.conj().T)


def _permute_word(w: Word, sigma) -> Word:
    return tuple(Letter(l.kind, sigma[l.label] if l.label < N_BASIS else l.label) for l in w)


@lru_cache(maxsize=None)
def _permutation_indices(word_set: str) -> tuple:
    words = level_words(word_set)
    index = {w: i for i, w in enumerate(words)}
    out = []
    for sigma in itertools.permutations(range(N_BASIS)):
        idx = np.array([index[_permute_word(w, sigma)] for w in words])
        idx.setflags(write=False)
        out.append(idx)
    return tuple(out)


def symmetrize(gamma: np.ndarray, word_set: str = "full") -> np.ndarray:
    """Average over the 24 relabelings of inputs/outcomes 1..4 (labels 5..7 fixed)."""
    perms = _permutation_indices(word_set)
    acc = np.zeros_like(gamma)
    for p in perms:
        acc += gamma[np.ix_(p, p)]
    return acc / len(perms)


def objective_functional(word_set: str = "full") -> np.ndarray:
    """Real symmetric ``C`` with ``W = sum_ij C_ij Re(Gamma_ij)``.

    Uses ``tr(psi_x E_{0|y}) = Gamma[1, psi_x] - Gamma[psi_x, E_y]`` so the
    functional is linear (no constant term).
    """
    index = {w: i for i, w in enumerate(level_words(word_set))}
    c = np.zeros((len(index), len(index)))

    def add(u, v, weight):
        i, j = index[u], index[v]
        c[i, j] += weight / 2
        c[j, i] += weight / 2

    for x in range(N_INPUTS):
        psi = (Letter("psi", x),)
        for y in range(N_INPUTS):
            e = (Letter("E", y),)
            if x == y:
                add(psi, e, 2.0)
            else:
                add((), psi, 1.0)
                add(psi, e, -1.0)
        if x < N_BASIS:
            add(psi, (Letter("phi", x),), 3.0)
    return c


def evaluate_objective(gamma: np.ndarray, word_set: str = "full") -> float:
    return float(np.sum(objective_functional(word_set) * np.real(gamma)))


def normalization_entries(word_set: str = "full") -> list:
    """Index pairs of ``Gamma[1, psi_x]``, each fixed to 1."""
    index = {w: i for i, w in enumerate(level_words(word_set))}
    return [(index[()], index[(Letter("psi", x),)]) for x in range(N_INPUTS)]


def _vec(g: np.ndarray, real: bool) -> np.ndarray:
    """Isometry from Hermitian (or real symmetric) matrices with the trace inner product to R^k."""
    n = g.shape[0]
    iu = np.triu_indices(n, 1)
    diag = np.real(np.diag(g))
    off = np.sqrt(2) * g[iu]
    if real:
        return np.concatenate([diag, np.real(off)])
    return np.concatenate([diag, np.real(off), np.imag(off)])


def _unvec(v: np.ndarray, n: int, real: bool) -> np.ndarray:
    iu = np.triu_indices(n, 1)
    m = len(iu[0])
    g = np.zeros((n, n), dtype=float if real else complex)
    off = v[n:n + m] / np.sqrt(2)
    if not real:
        off = off + 1j * v[n + m:] / np.sqrt(2)
    g[iu] = off
    g = g + g.conj().T
    g[np.diag_indices(n)] = v[:n]
    return g


@dataclass
class AffineBasis:
    """Orthonormal basis (trace inner product) of the span of sampled moment matrices."""

    matrices: list
    samples_used: int
    saturated: bool
    word_set: str = "full"
    real: bool = True
    symmetrized: bool = True
    rank_history: list = field(default_factory=list)
    samples: list = field(default_factory=list)

    @property
    def rank(self) -> int:
        return len(self.matrices)

    @property
    def size(self) -> int:
        return len(level_words(self.word_set))


def build_affine_basis(
    sample_budget: int,
    rng: np.random.Generator,
    *,
    rank_tol: float = RANK_TOL,
    window: int = SATURATION_WINDOW,
    word_set: str = "full",
    symmetrized: bool = True,
    real: bool = True,
    keep_samples: bool = False,
) -> AffineBasis:
    """Gram-Schmidt over sampled (by default S4-averaged, real) moment matrices.

    A sample is new when its residual after projection exceeds ``rank_tol``
    times its norm. Sampling stops once ``window`` consecutive samples add
    nothing, or when the budget runs out (then :class:`BudgetExhaustedWarning`).
    """
    if sample_budget < 1:
        raise ValidationError("sample budget must be >= 1")
    n = len(level_words(word_set))
    q = np.zeros((0, 0))
    vecs = []
    samples = []
    history = []
    last_gain = 0
    saturated = False
    used = 0
    for used in range(1, sample_budget + 1):
        g = moment_matrix(random_realization(rng), word_set)
        if symmetrized:
            g = symmetrize(g, word_set)
        if real:
            g = np.real(g)
        v = _vec(g, real)
        r = v.copy()
        if vecs:
            q = np.array(vecs)
            for _ in range(2):
                r -= q.T @ (q @ r)
        if np.linalg.norm(r) > rank_tol * np.linalg.norm(v):
            vecs.append(r / np.linalg.norm(r))
            if keep_samples:
                samples.append(g)
            last_gain = used
        history.append(len(vecs))
        if used - last_gain >= window:
            saturated = True
            break
    if not saturated:
        warnings.warn(
            f"sample budget {sample_budget} exhausted at rank {len(vecs)} before saturation",
            BudgetExhaustedWarning,
            stacklevel=2,
        )
    mats = [_unvec(v, n, real) for v in vecs]
    log.info("moment matrix size %d, basis rank %d after %d samples", n, len(mats), used)
    return AffineBasis(mats, used, saturated, word_set, real, symmetrized, history, samples)


@dataclass
class BoundResult:
    bound: float
    gamma: np.ndarray
    residuals: dict


def solve_upper_bound(basis: AffineBasis, objective: np.ndarray | None = None, *, gap_tol: float = 1e-5) -> BoundResult:
    """Maximize the objective over PSD matrices in the span with ``Gamma[1, psi_x] = 1``.

    The normalization is eliminated by parametrizing its solution set
    ``z0 + N t``; if that set is a single point its objective is returned
    directly (after a PSD check).
    """
    if basis.rank < 1:
        raise ValidationError("basis is empty")
    c_mat = objective_functional(basis.word_set) if objective is None else np.asarray(objective, dtype=float)
    mats = basis.matrices if basis.real else _real_span(basis.matrices)
    norm_rows = np.array([[np.real(m[i, j]) for m in mats] for i, j in normalization_entries(basis.word_set)])
    rhs = np.ones(norm_rows.shape[0])
    z0, *_ = np.linalg.lstsq(norm_rows, rhs, rcond=None)
    if np.max(np.abs(norm_rows @ z0 - rhs)) > 1e-8:
        raise ValidationError("normalization cannot be met in this span")
    _, s, vh = np.linalg.svd(norm_rows)
    rank = int(np.sum(s > 1e-10 * max(1.0, s[0])))
    null = vh[rank:].T
    weights = np.array([np.sum(c_mat * np.real(m)) for m in mats])

    def combine(z):
        return sum(zi * m for zi, m in zip(z, mats))

    g0 = combine(z0)
    if null.shape[1] == 0:
        min_eig = float(np.linalg.eigvalsh(g0)[0])
        if min_eig < -1e-7:
            raise SolverNotConverged("the single normalized point is not PSD", {"min_eigenvalue": min_eig})
        return BoundResult(float(weights @ z0), g0, {"status": "singleton", "min_eigenvalue": min_eig, "gap": 0.0})
    dirs = [combine(col) for col in null.T]
    q = _joint_range(mats)
    sol = solve_lmi(null.T @ weights, [q.T @ g0 @ q], [[q.T @ d @ q for d in dirs]], gap_tol=gap_tol, feas_tol=1e-7)
    z = z0 + null @ sol.z
    gamma = combine(z)
    value = float(weights @ z)
    return BoundResult(value, gamma, sol.residuals)


def _joint_range(mats: list) -> np.ndarray:
    """Orthonormal columns spanning the ranges of all matrices in the span.

    Every element of the span vanishes on the complement, so compressing to
    this range keeps PSD-ness equivalent and gives the LMI a strict interior
    when few samples were drawn.
    """
    acc = sum(m @ m for m in mats)
    w, v = np.linalg.eigh(acc)
    return v[:, w > 1e-10 * w[-1]]


def _real_span(mats: list) -> list:
    """Orthonormal basis of the real parts of a complex span.

    The sampling distribution is invariant under complex conjugation and the
    objective is real, so ``Re(Gamma)`` is feasible whenever ``Gamma`` is and
    scores the same; the complex problem reduces to this real one.
    """
    n = mats[0].shape[0]
    v = np.array([_vec(np.real(m), True) for m in mats])
    _, s, vh = np.linalg.svd(v, full_matrices=False)
    keep = s > RANK_TOL * s[0]
    return [_unvec(row, n, True) for row in vh[keep]]


@dataclass
class BoundReport:
    bound: float
    basis_rank: int
    samples_used: int
    saturated: bool
    matrix_size: int
    solver_residuals: dict
    seed: int | None
    word_set: str = "full"

    def to_json(self) -> dict:
        return {
            "bound": self.bound,
            "basis_rank": self.basis_rank,
            "samples_used": self.samples_used,
            "saturated": self.saturated,
            "matrix_size": self.matrix_size,
            "word_set": self.word_set,
            "solver_residuals": self.solver_residuals,
            "seed": self.seed,
        }


def compute_upper_bound(
    sample_budget: int = 2000,
    seed: int | None = 0,
    *,
    word_set: str = "full",
    real: bool = True,
    rank_tol: float = RANK_TOL,
    window: int = SATURATION_WINDOW,
) -> BoundReport:
    """Sample the basis and solve the relaxation in one call."""
    rng = np.random.default_rng(seed)
    basis = build_affine_basis(
        sample_budget, rng, rank_tol=rank_tol, window=window, word_set=word_set, real=real
    )
    result = solve_upper_bound(basis)
    return BoundReport(
        result.bound, basis.rank, basis.samples_used, basis.saturated, basis.size, result.residuals, seed, word_set
    )
