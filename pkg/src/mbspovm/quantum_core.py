"""Dense complex linear algebra and validated quantum objects.

Matrices and kets are plain ``numpy`` arrays. The only wrapper type is
:class:`Povm`, which validates its elements once at construction and is
immutable afterwards.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    CompletenessViolation,
    NonHermitianError,
    NonSquareError,
    SingularInputError,
    ValidationError,
)

HERMITIAN_TOL = 1e-9
# shipped printed data carries 4 decimals
DATA_TOL = 2e-2
CONSTRUCTED_TOL = 1e-8
ZERO_TOL = 1e-10
DEGENERACY_TOL = 1e-9


def _as_square(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NonSquareError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("matrix has non-finite entries")
    return a


def check_hermitian(a, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Return ``a`` as a complex array after checking ``a == a^dagger`` within ``tol``."""
    a = _as_square(a)
    dev = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
    if dev > tol:
        raise NonHermitianError(f"matrix is not Hermitian (max deviation {dev:.3g})")
    return a


def dagger(a) -> np.ndarray:
    return np.asarray(a).conj().T


def ket_to_density(ket) -> np.ndarray:
    ket = np.asarray(ket, dtype=complex)
    return np.outer(ket, ket.conj())


def as_ket(v, *, normalize: bool = False, tol: float = 1e-9) -> np.ndarray:
    """Validate a state vector.

    With ``normalize=False`` the norm must already be one within ``tol``;
    otherwise the vector is rescaled (zero vectors are rejected either way).
    """
    v = np.asarray(v, dtype=complex).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ValidationError("ket has non-finite amplitudes")
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValidationError("zero vector is not a state")
    if normalize:
        return v / norm
    if abs(norm - 1.0) > tol:
        raise ValidationError(f"ket is not normalized (norm {norm:.12g})")
    return v


def hermitian_eigendecomposition(a, tol: float = HERMITIAN_TOL):
    """Eigenvalues (ascending) and orthonormal eigenvectors (as columns) of a Hermitian matrix."""
    a = check_hermitian(a, tol)
    # symmetrize so LAPACK sees an exactly Hermitian input
    w, v = np.linalg.eigh(0.5 * (a + a.conj().T))
    return w, v


def positive_eigenspace_projector(a, zero_tol: float = ZERO_TOL) -> np.ndarray:
    """Projector onto the span of eigenvectors with eigenvalue > ``zero_tol``.

    This is the maximizer of ``tr(A E)`` over all ``0 <= E <= I``.
    """
    w, v = hermitian_eigendecomposition(a)
    keep = v[:, w > zero_tol]
    return keep @ keep.conj().T


class TopEigenvector(NamedTuple):
    vector: np.ndarray
    value: float
    degenerate: bool


def top_eigenvector(a) -> TopEigenvector:
    """Unit vector maximizing ``<v|A|v>``.

    When the top eigenvalue is degenerate (gap below 1e-9) an arbitrary unit
    vector of the top eigenspace is returned and ``degenerate`` is set.
    """
    w, v = hermitian_eigendecomposition(a)
    degenerate = len(w) > 1 and (w[-1] - w[-2]) < DEGENERACY_TOL
    return TopEigenvector(v[:, -1].copy(), float(w[-1]), bool(degenerate))


def unitarity_deviation(a) -> float:
    """Frobenius norm of ``A A^dagger - I``."""
    a = _as_square(a)
    return float(np.linalg.norm(a @ a.conj().T - np.eye(a.shape[0])))


def nearest_unitary(a) -> np.ndarray:
    """Polar (unitary) factor of ``a``: the unitary closest to it in Frobenius norm."""
    a = _as_square(a)
    u, s, vh = np.linalg.svd(a)
    if s[-1] < 1e-12:
        raise SingularInputError(f"smallest singular value {s[-1]:.3g} is below 1e-12")
    return u @ vh


def haar_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_ket(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_hermitian(rng: np.random.Generator, d: int) -> np.ndarray:
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return 0.5 * (z + z.conj().T)


@dataclass(frozen=True, eq=False)
class Povm:
    """Ordered list of PSD operators summing to the identity.

    ``tol`` is the completeness tolerance: 1e-8 for objects built
    numerically, :data:`DATA_TOL` for matrices transcribed at 4 decimals.
    Hermiticity and positivity are always checked at the tighter
    ``elem_tol``.
    """

    elements: tuple
    tol: float = CONSTRUCTED_TOL
    elem_tol: float = HERMITIAN_TOL

    def __post_init__(self):
        elems = []
        for e in self.elements:
            e = check_hermitian(e, self.elem_tol).copy()
            e.setflags(write=False)
            elems.append(e)
        if not elems:
            raise ValidationError("POVM needs at least one element")
        d = elems[0].shape[0]
        if any(e.shape != (d, d) for e in elems):
            raise ValidationError("POVM elements have inconsistent shapes")
        for i, e in enumerate(elems):
            lo = np.linalg.eigvalsh(0.5 * (e + e.conj().T))[0]
            if lo < -max(self.elem_tol, 0.0):
                raise ValidationError(f"POVM element {i} is not PSD (min eigenvalue {lo:.3g})")
        object.__setattr__(self, "elements", tuple(elems))
        res = self.completeness_residual
        if res > self.tol:
            raise CompletenessViolation(
                f"POVM elements sum to identity only within {res:.3g} (> tol {self.tol:.3g})"
            )

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    @property
    def n_outcomes(self) -> int:
        return len(self.elements)

    @property
    def completeness_residual(self) -> float:
        total = sum(self.elements)
        return float(np.max(np.abs(total - np.eye(self.dim))))

    def __len__(self):
        return len(self.elements)

    def __getitem__(self, i):
        return self.elements[i]

    def __iter__(self):
        return iter(self.elements)

    def probabilities(self, ket) -> np.ndarray:
        ket = np.asarray(ket, dtype=complex)
        return np.array([np.real(np.vdot(ket, e @ ket)) for e in self.elements])

    @classmethod
    def from_kets(cls, kets: Sequence, **kw) -> "Povm":
        """Rank-1 POVM ``{|k><k|}`` from (unnormalized) kets."""
        return cls(tuple(ket_to_density(k) for k in kets), **kw)

    @classmethod
    def dichotomic(cls, projector, **kw) -> "Povm":
        """Two-outcome measurement ``(I - P, P)``, indexed by outcome b in {0, 1}."""
        p = np.asarray(projector, dtype=complex)
        return cls((np.eye(p.shape[0]) - p, p), **kw)

    @classmethod
    def uniform(cls, dim: int, n: int) -> "Povm":
        return cls(tuple(np.eye(dim) / n for _ in range(n)))


def projectivity_report(povm: Povm) -> dict:
    """Largest idempotency defect ``||M^2 - M||`` and orthogonality defect ``||M_i M_j||`` (Frobenius)."""
    elems = povm.elements
    idem = max(float(np.linalg.norm(a @ a - a)) for a in elems)
    orth = 0.0
    for i, a in enumerate(elems):
        for b in elems[i + 1:]:
            orth = max(orth, float(np.linalg.norm(a @ b)))
    return {"idempotency_defect": idem, "orthogonality_defect": orth}


def is_projective(povm: Povm, tol: float = 1e-6) -> bool:
    """True iff every element is idempotent and distinct elements are mutually orthogonal."""
    rep = projectivity_report(povm)
    return rep["idempotency_defect"] <= tol and rep["orthogonality_defect"] <= tol


def complex_to_json(z) -> list:
    return [float(np.real(z)), float(np.imag(z))]


def matrix_to_json(a) -> dict:
    a = np.asarray(a, dtype=complex)
    return {
        "rows": int(a.shape[0]),
        "cols": int(a.shape[1]),
        "entries": [[complex_to_json(z) for z in row] for row in a],
    }


def matrix_from_json(doc: dict) -> np.ndarray:
    a = np.array(
        [[complex(re, im) for re, im in row] for row in doc["entries"]], dtype=complex
    ).reshape(doc["rows"], doc["cols"])
    if not np.all(np.isfinite(a)):
        raise ValidationError("matrix has non-finite entries")
    return a


def ket_to_json(v) -> list:
    return [complex_to_json(z) for z in np.asarray(v).reshape(-1)]


def ket_from_json(doc: list) -> np.ndarray:
    return np.array([complex(re, im) for re, im in doc], dtype=complex)
