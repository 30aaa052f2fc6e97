"""Generalized measurements realized by a D-port multiport beamsplitter.

A d-dimensional system is encoded in input ports ``k_1..k_d`` of a D x D
unitary ``U``; the remaining ports act as the ancilla of a Naimark dilation.
Detecting output port ``j`` realizes the rank-1 element ``|eta_j><eta_j|``
with ``|eta_j> = Phi^dagger M |j>``, where ``M`` holds rows ``k_1..k_d`` of
``U^dagger`` and ``Phi`` carries the input phase shifts.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Sequence

import numpy as np

from .errors import (
    CompletenessViolation,
    IndexOutOfRangeError,
    InvalidDimsError,
    NotRankOneError,
    ShapeMismatchError,
    ValidationError,
)
from .quantum_core import (
    CONSTRUCTED_TOL,
    DATA_TOL,
    Povm,
    is_projective,
    matrix_from_json,
    unitarity_deviation,
)


@dataclass(frozen=True, eq=False)
class MultiportUnitary:
    matrix: np.ndarray
    label: str = ""
    tolerance: float = CONSTRUCTED_TOL

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError(f"multiport unitary must be square, got {m.shape}")
        dev = unitarity_deviation(m)
        if dev > self.tolerance:
            raise CompletenessViolation(
                f"{self.label or 'matrix'} deviates from unitarity by {dev:.3g} (> {self.tolerance:.3g})"
            )
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def ports(self) -> int:
        return self.matrix.shape[0]

    @property
    def deviation(self) -> float:
        return unitarity_deviation(self.matrix)


@dataclass(frozen=True)
class PovmSpec:
    """Input ports (1-based) carrying the system and the phase applied on each."""

    subset: tuple
    phases: tuple = None

    def __post_init__(self):
        subset = tuple(int(k) for k in self.subset)
        if len(set(subset)) != len(subset):
            raise ValidationError(f"port indices must be distinct: {subset}")
        phases = (0.0,) * len(subset) if self.phases is None else tuple(float(p) for p in self.phases)
        if len(phases) != len(subset):
            raise ValidationError("one phase per selected port is required")
        object.__setattr__(self, "subset", subset)
        object.__setattr__(self, "phases", phases)

    @property
    def dim(self) -> int:
        return len(self.subset)


@dataclass(frozen=True, eq=False)
class Rank1Form:
    """``M_b = weights[b] |directions[b]><directions[b]|`` with unit directions."""

    weights: np.ndarray
    directions: tuple = field(default=())

    def element(self, b: int) -> np.ndarray:
        v = self.directions[b]
        return self.weights[b] * np.outer(v, v.conj())

    def to_povm(self, tol: float = CONSTRUCTED_TOL) -> Povm:
        return Povm(tuple(self.element(b) for b in range(len(self.weights))), tol=tol)


def system_block(u: MultiportUnitary, subset: Sequence[int]) -> np.ndarray:
    """Rows ``subset`` (1-based) of ``U^dagger``: a d x D matrix whose columns are the element kets."""
    D = u.ports
    for k in subset:
        if not 1 <= k <= D:
            raise IndexOutOfRangeError(f"port {k} outside 1..{D}")
    return u.matrix.conj().T[[k - 1 for k in subset], :]


def build_povm(u: MultiportUnitary, spec: PovmSpec) -> Povm:
    """D-outcome rank-1 POVM on C^d realized by feeding ports ``spec.subset``."""
    if spec.dim > u.ports:
        raise InvalidDimsError(f"cannot encode d={spec.dim} in {u.ports} ports")
    m = system_block(u, spec.subset)
    phi_dag = np.diag(np.exp(-1j * np.asarray(spec.phases)))
    etas = phi_dag @ m
    tol = max(u.tolerance, CONSTRUCTED_TOL)
    return Povm.from_kets([etas[:, j] for j in range(u.ports)], tol=tol)


def povm_from_block(block, tol: float = DATA_TOL) -> Povm:
    """POVM whose element j is ``|c_j><c_j|`` for column ``c_j`` of a printed d x D block."""
    block = np.asarray(block, dtype=complex)
    return Povm.from_kets([block[:, j] for j in range(block.shape[1])], tol=tol)


def enumerate_subsets(D: int, d: int) -> list[tuple[int, ...]]:
    """All ``C(D, d)`` port subsets, 1-based, in lexicographic order."""
    if not (1 <= d <= D):
        raise InvalidDimsError(f"need 1 <= d <= D, got d={d}, D={D}")
    return list(itertools.combinations(range(1, D + 1), d))


def _fix_gauge(v: np.ndarray, tiny: float = 1e-12) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > tiny)
    if nz.size == 0:
        return v
    a = v[nz[0]]
    return v * (abs(a) / a)


def canonical_rank1_form(povm: Povm, rank_tol: float = 1e-8) -> Rank1Form:
    """Split each rank-1 element into weight ``tr(M_b)`` and a gauge-fixed unit direction.

    The gauge makes the first nonzero amplitude of every direction real and
    nonnegative.
    """
    weights, dirs = [], []
    for b, e in enumerate(povm.elements):
        w, v = np.linalg.eigh(0.5 * (e + e.conj().T))
        if len(w) > 1 and w[-2] > rank_tol:
            raise NotRankOneError(f"element {b} has second eigenvalue {w[-2]:.3g}")
        weights.append(float(np.real(np.trace(e))))
        if w[-1] <= rank_tol:
            direction = np.zeros(povm.dim, dtype=complex)
            direction[0] = 1.0
        else:
            direction = _fix_gauge(v[:, -1])
        dirs.append(direction)
    return Rank1Form(np.array(weights), tuple(dirs))


def povm_equivalent(p: Povm, q: Povm, tol: float) -> bool:
    """Elementwise operator comparison (free of per-element phase conventions)."""
    if p.dim != q.dim or p.n_outcomes != q.n_outcomes:
        raise ShapeMismatchError(
            f"cannot compare {p.n_outcomes}-outcome POVM on C^{p.dim} with "
            f"{q.n_outcomes}-outcome POVM on C^{q.dim}"
        )
    return all(np.linalg.norm(a - b) <= tol for a, b in zip(p, q))


def max_element_distance(p: Povm, q: Povm) -> float:
    return max(float(np.linalg.norm(a - b)) for a, b in zip(p, q))


def _load(name: str) -> dict:
    with resources.files("mbspovm.data").joinpath(name).open("r") as fh:
        return json.load(fh)


@lru_cache(maxsize=None)
def _builtin():
    u4 = _load("u4.json")
    u7 = _load("u7.json")
    povms = _load("mbs7_povms.json")
    blocks = {}
    for entry in povms["povms"]:
        m = matrix_from_json(entry["matrix"])
        m.setflags(write=False)
        blocks[tuple(entry["subset"])] = m
    return {
        "U4": MultiportUnitary(matrix_from_json(u4["matrix"]), "U4", u4["data_tolerance"]),
        "U7": MultiportUnitary(matrix_from_json(u7["matrix"]), "U7", u7["data_tolerance"]),
        "blocks": blocks,
        "data_tolerance": povms["data_tolerance"],
    }


def builtin_matrices() -> dict:
    """Shipped device data at printed precision.

    Keys: ``U4`` and ``U7`` (:class:`MultiportUnitary`), ``M_4567`` (4 x 7
    block of the protocol POVM), ``blocks`` (all 35 printed 4 x 7 blocks
    keyed by port subset) and ``data_tolerance``.
    """
    data = _builtin()
    return {
        "U4": data["U4"],
        "U7": data["U7"],
        "M_4567": data["blocks"][(4, 5, 6, 7)],
        "blocks": dict(data["blocks"]),
        "data_tolerance": data["data_tolerance"],
    }


def protocol_povm() -> Povm:
    """Seven-outcome POVM from the printed ``M_4567`` block."""
    return povm_from_block(builtin_matrices()["M_4567"])


def data_quality_report(u: MultiportUnitary | None = None) -> dict:
    """Compare every printed POVM block with the one rebuilt from ``U`` (default: printed U7).

    Per subset it records the completeness residual of the printed block, the
    largest deviation of its row Gram matrix from the identity, and the largest
    element-wise operator distance to ``build_povm(U, subset)`` at zero phase.
    """
    data = builtin_matrices()
    u = data["U7"] if u is None else u
    tol = data["data_tolerance"]
    rows = []
    for subset, block in sorted(data["blocks"].items()):
        printed = povm_from_block(block, tol=tol)
        rebuilt = build_povm(u, PovmSpec(subset))
        dist = max_element_distance(printed, rebuilt)
        rows.append(
            {
                "subset": list(subset),
                "completeness_residual": printed.completeness_residual,
                "row_orthonormality_deviation": float(
                    np.max(np.abs(block @ block.conj().T - np.eye(block.shape[0])))
                ),
                "max_element_distance_to_rebuilt": dist,
                "equivalent_to_rebuilt": dist <= tol,
                "projective": is_projective(printed),
            }
        )
    return {
        "unitary": u.label,
        "unitarity_deviation": u.deviation,
        "data_tolerance": tol,
        "povms": rows,
    }
