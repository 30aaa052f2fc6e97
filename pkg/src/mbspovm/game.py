"""Seven-input communication game and its score.

Alice encodes ``x in 1..7`` into a ququart ``|psi_x>``. Bob either asks
"is it y?" with a dichotomic measurement ``{E_{0|y}, E_{1|y}}`` (2 points
for a correct "yes", 1 for a correct "no") or performs the seven-outcome
measurement ``{M_b'}`` and guesses ``x`` (3 points).

Indices are 0-based in code (``x = 0..6``) and 1-based in files and reports.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, MissingEntryError, ValidationError
from .quantum_core import (
    CONSTRUCTED_TOL,
    DATA_TOL,
    Povm,
    as_ket,
    ket_from_json,
    ket_to_density,
    ket_to_json,
    matrix_from_json,
    matrix_to_json,
)

N_INPUTS = 7
DIM = 4
MAX_SCORE = 77.0


@dataclass(frozen=True, eq=False)
class Strategy:
    """States, the seven dichotomic measurements, and the final seven-outcome measurement.

    ``dichotomic[y][b]`` is ``E_{b|y}``; ``final[x]`` is ``M_x``.
    """

    states: tuple
    dichotomic: tuple
    final: Povm

    def __post_init__(self):
        states = tuple(as_ket(s, tol=1e-6) for s in self.states)
        if len(states) != N_INPUTS or len(self.dichotomic) != N_INPUTS:
            raise DimensionMismatchError("a strategy has exactly 7 states and 7 dichotomic measurements")
        d = states[0].shape[0]
        if any(s.shape != (d,) for s in states):
            raise DimensionMismatchError("states have different dimensions")
        for m in self.dichotomic:
            if m.n_outcomes != 2 or m.dim != d:
                raise DimensionMismatchError("dichotomic measurements must be 2-outcome POVMs on the state space")
        if self.final.n_outcomes != N_INPUTS or self.final.dim != d:
            raise DimensionMismatchError("final measurement must have 7 outcomes on the state space")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "dichotomic", tuple(self.dichotomic))

    @property
    def dim(self) -> int:
        return self.states[0].shape[0]

    def permuted(self, perm: Sequence[int]) -> "Strategy":
        """Relabel inputs by ``perm`` (0-based, length 7): new label ``perm[x]`` carries old ``x``."""
        inv = np.argsort(perm)
        return Strategy(
            tuple(self.states[i] for i in inv),
            tuple(self.dichotomic[i] for i in inv),
            Povm(tuple(self.final[i] for i in inv), tol=self.final.tol),
        )


@dataclass(frozen=True, eq=False)
class ProbabilityTables:
    """``proj[x, y] = p(b = delta_xy | x, y)`` and ``povm[x] = p(b' = x | x, povm)``."""

    proj: np.ndarray
    povm: np.ndarray
    proj_sigma: np.ndarray | None = None
    povm_sigma: np.ndarray | None = None

    def __post_init__(self):
        for name, shape in (("proj", (7, 7)), ("povm", (7,)), ("proj_sigma", (7, 7)), ("povm_sigma", (7,))):
            val = getattr(self, name)
            if val is None:
                continue
            arr = np.array(val, dtype=float)
            if arr.shape != shape:
                raise DimensionMismatchError(f"{name} must have shape {shape}, got {arr.shape}")
            if name in ("proj", "povm") and np.any((arr < -1e-12) | (arr > 1 + 1e-12)):
                raise ValidationError(f"{name} entries must lie in [0, 1]")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def has_sigma(self) -> bool:
        return self.proj_sigma is not None and self.povm_sigma is not None


def _weight(x: int, y: int) -> int:
    if x == y:
        return 2
    return 1


def score_breakdown(s: Strategy) -> ProbabilityTables:
    proj = np.empty((7, 7))
    povm = np.empty(7)
    for x, psi in enumerate(s.states):
        for y, meas in enumerate(s.dichotomic):
            b = 1 if x == y else 0
            proj[x, y] = np.real(np.vdot(psi, meas[b] @ psi))
        povm[x] = np.real(np.vdot(psi, s.final[x] @ psi))
    return ProbabilityTables(np.clip(proj, 0.0, 1.0), np.clip(povm, 0.0, 1.0))


def score(s: Strategy) -> float:
    """Total points W of a strategy (between 0 and 77)."""
    w = 0.0
    for x, psi in enumerate(s.states):
        for y, meas in enumerate(s.dichotomic):
            if x == y:
                w += 2 * np.real(np.vdot(psi, meas[1] @ psi))
            else:
                w += np.real(np.vdot(psi, meas[0] @ psi))
        w += 3 * np.real(np.vdot(psi, s.final[x] @ psi))
    return float(w)


def score_density(rhos: Sequence, dichotomic: Sequence[Povm], final: Povm) -> float:
    """Score for mixed preparations ``rho_x``."""
    if len(rhos) != N_INPUTS:
        raise DimensionMismatchError("need 7 density matrices")
    w = 0.0
    for x, rho in enumerate(rhos):
        rho = np.asarray(rho, dtype=complex)
        for y, meas in enumerate(dichotomic):
            b = 1 if x == y else 0
            w += _weight(x, y) * np.real(np.trace(rho @ meas[b]))
        w += 3 * np.real(np.trace(rho @ final[x]))
    return float(w)


def score_from_probabilities(t: ProbabilityTables) -> tuple[float, float | None]:
    """W from probability tables, with Gaussian-propagated sigma when the tables carry sigmas."""
    if t.proj is None or t.povm is None or np.any(np.isnan(t.proj)) or np.any(np.isnan(t.povm)):
        raise MissingEntryError("probability tables are incomplete")
    weights = np.ones((7, 7)) + np.eye(7)
    w = float(np.sum(weights * t.proj) + 3 * np.sum(t.povm))
    if not t.has_sigma:
        return w, None
    var = np.sum(weights**2 * t.proj_sigma**2) + 9 * np.sum(t.povm_sigma**2)
    return w, float(np.sqrt(var))


def _sum_to_identity_residual(elems) -> float:
    return float(np.max(np.abs(sum(elems) - np.eye(elems[0].shape[0]))))


def strategy_from_vectors(state_bras, projector_bras, final_bras, final_weights, tol: float = DATA_TOL) -> Strategy:
    """Build a strategy from printed bra-vectors.

    Kets are the complex conjugates of the printed rows; states and the
    rank-1 projectors ``E_{1|y}`` are normalized, final elements are
    ``beta_b |phi_b><phi_b|`` with normalized ``phi_b``.
    """
    states = [as_ket(np.conj(v), normalize=True) for v in state_bras]
    dich = []
    for v in projector_bras:
        e = as_ket(np.conj(v), normalize=True)
        dich.append(Povm.dichotomic(ket_to_density(e)))
    finals = []
    for w, v in zip(final_weights, final_bras):
        phi = as_ket(np.conj(v), normalize=True)
        finals.append(w * ket_to_density(phi))
    return Strategy(tuple(states), tuple(dich), Povm(tuple(finals), tol=tol))


def protocol_strategy() -> Strategy:
    """The shipped seven-outcome protocol strategy (printed precision)."""
    with resources.files("mbspovm.data").joinpath("strategy_printed.json").open() as fh:
        doc = json.load(fh)
    return strategy_from_vectors(
        [ket_from_json(v) for v in doc["state_bras"]],
        [ket_from_json(v) for v in doc["projector_bras"]],
        [ket_from_json(v) for v in doc["final_bras"]],
        doc["final_weights"],
        tol=doc["data_tolerance"],
    )


def strategy_to_json(s: Strategy) -> dict:
    return {
        "dim": s.dim,
        "states": [ket_to_json(v) for v in s.states],
        "dichotomic": [[matrix_to_json(e) for e in m] for m in s.dichotomic],
        "final": {
            "tolerance": s.final.tol,
            "elements": [matrix_to_json(e) for e in s.final],
        },
    }


def strategy_from_json(doc: dict) -> Strategy:
    final = doc["final"]
    tol = final.get("tolerance", CONSTRUCTED_TOL)
    dich = tuple(
        Povm(tuple(matrix_from_json(e) for e in m), tol=max(tol, CONSTRUCTED_TOL)) for m in doc["dichotomic"]
    )
    return Strategy(
        tuple(ket_from_json(v) for v in doc["states"]),
        dich,
        Povm(tuple(matrix_from_json(e) for e in final["elements"]), tol=tol),
    )


def save_strategy(s: Strategy, path) -> None:
    with open(path, "w") as fh:
        json.dump(strategy_to_json(s), fh, indent=1)


def load_strategy(path) -> Strategy:
    with open(path) as fh:
        return strategy_from_json(json.load(fh))


CSV_HEADER = ["table", "x", "y", "value", "sigma"]


def tables_to_csv(t: ProbabilityTables) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for x in range(7):
        for y in range(7):
            sig = "" if t.proj_sigma is None else repr(float(t.proj_sigma[x, y]))
            w.writerow(["proj", x + 1, y + 1, repr(float(t.proj[x, y])), sig])
    for x in range(7):
        sig = "" if t.povm_sigma is None else repr(float(t.povm_sigma[x]))
        w.writerow(["povm", x + 1, "", repr(float(t.povm[x])), sig])
    return buf.getvalue()


def tables_from_csv(text: str) -> ProbabilityTables:
    proj = np.full((7, 7), np.nan)
    povm = np.full(7, np.nan)
    proj_s = np.full((7, 7), np.nan)
    povm_s = np.full(7, np.nan)
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or list(reader.fieldnames) != CSV_HEADER:
        raise ValidationError(f"expected CSV header {','.join(CSV_HEADER)}")
    for row in reader:
        x = int(row["x"]) - 1
        sigma = float(row["sigma"]) if row["sigma"] not in ("", None) else np.nan
        if row["table"] == "proj":
            y = int(row["y"]) - 1
            proj[x, y] = float(row["value"])
            proj_s[x, y] = sigma
        elif row["table"] == "povm":
            povm[x] = float(row["value"])
            povm_s[x] = sigma
        else:
            raise ValidationError(f"unknown table kind {row['table']!r}")
    if np.any(np.isnan(proj)) or np.any(np.isnan(povm)):
        raise MissingEntryError("CSV does not cover all 49 + 7 entries")
    has_sigma = not (np.any(np.isnan(proj_s)) or np.any(np.isnan(povm_s)))
    return ProbabilityTables(
        proj, povm, proj_s if has_sigma else None, povm_s if has_sigma else None
    )
