"""See-saw lower bounds for the seven-input game.

Each sweep updates, in order, the states (top eigenvectors), the dichotomic
measurements (positive-eigenspace projectors, closed form) and, unless it is
frozen, the final measurement (an SDP). Every block update is a best response,
so W never decreases. Random restarts are independent; the best one wins.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, SolverNotConverged, ValidationError
from .game import DIM, N_INPUTS, Strategy, score
from .mbs import protocol_povm
from .quantum_core import (
    Povm,
    is_projective,
    ket_to_density,
    positive_eigenspace_projector,
    projectivity_report,
    random_ket,
    top_eigenvector,
)
from .sdp import optimal_povm

log = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-10


class Mode(str, enum.Enum):
    FIXED_FINAL = "fixed_final"
    PROJECTIVE_RELAXED = "projective_relaxed"
    FREE = "free"


@dataclass(frozen=True)
class SeesawConfig:
    """Run parameters.

    ``final_povm`` is only used in FIXED_FINAL mode (default: the shipped
    protocol POVM).
    """

    mode: Mode = Mode.FREE
    restarts: int = 50
    max_iters: int = 500
    tol: float = 1e-9
    rng_seed: int = 0
    final_povm: Povm | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.restarts < 1:
            raise ValidationError("restarts must be >= 1")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValidationError("convergence tolerance must be positive")

    @property
    def final_outcomes(self) -> int:
        return 4 if self.mode is Mode.PROJECTIVE_RELAXED else N_INPUTS


@dataclass
class SeesawTrace:
    """Outcome of one restart (or the best of several).

    ``history`` holds W after every sweep (entry 0 is the initial strategy);
    ``half_steps`` holds W after every individual block update.
    """

    history: list
    strategy: Strategy
    converged: bool
    projectivity: dict
    half_steps: list = field(default_factory=list)
    restart: int = 0
    degenerate_updates: int = 0

    @property
    def score(self) -> float:
        return self.history[-1]

    def to_json(self) -> dict:
        from .game import strategy_to_json

        return {
            "score": self.score,
            "converged": self.converged,
            "iterations": len(self.history) - 1,
            "restart": self.restart,
            "history": list(self.history),
            "projectivity": self.projectivity,
            "degenerate_updates": self.degenerate_updates,
            "strategy": strategy_to_json(self.strategy),
        }


def update_dichotomic(states: Sequence[np.ndarray]) -> tuple:
    """Best dichotomic measurements for fixed states.

    ``E_{1|y}`` projects onto the positive part of
    ``2 rho_y - sum_{x != y} rho_x``.
    """
    rhos = [ket_to_density(s) for s in states]
    total = sum(rhos)
    out = []
    for y, rho in enumerate(rhos):
        a = 3 * rho - total
        out.append(Povm.dichotomic(positive_eigenspace_projector(a)))
    return tuple(out)


def state_operators(dichotomic: Sequence[Povm], final: Povm) -> list:
    """``B_x`` with ``W = sum_x <psi_x|B_x|psi_x>``."""
    zeros = sum(m[0] for m in dichotomic)
    return [2 * dichotomic[x][1] + zeros - dichotomic[x][0] + 3 * final[x] for x in range(N_INPUTS)]


def update_states(dichotomic: Sequence[Povm], final: Povm) -> tuple:
    """Best states for fixed measurements: top eigenvectors of ``B_x``.

    Returns ``(states, n_degenerate)``.
    """
    states, degenerate = [], 0
    for b in state_operators(dichotomic, final):
        top = top_eigenvector(b)
        states.append(top.vector)
        degenerate += top.degenerate
    return tuple(states), degenerate


def pad_final(povm: Povm, n: int = N_INPUTS) -> Povm:
    """Extend a POVM with zero elements up to ``n`` outcomes."""
    if povm.n_outcomes > n:
        raise DimensionMismatchError(f"cannot pad {povm.n_outcomes} outcomes down to {n}")
    zero = np.zeros((povm.dim, povm.dim), dtype=complex)
    return Povm(tuple(povm.elements) + (zero,) * (n - povm.n_outcomes), tol=povm.tol)


def update_final_povm(states: Sequence[np.ndarray], n_outcomes: int, *, gap_tol: float = 1e-8) -> Povm:
    """Optimal ``n_outcomes``-outcome measurement for guessing ``x`` among the first ``n_outcomes`` states.

    Maximizes ``sum_x 3 <psi_x|N_x|psi_x>``. Raises :class:`SolverNotConverged`
    if the certified duality gap exceeds the tolerance.
    """
    if n_outcomes not in (4, N_INPUTS):
        raise ValidationError(f"n_outcomes must be 4 or 7, got {n_outcomes}")
    ops = [3 * ket_to_density(s) for s in states[:n_outcomes]]
    elems, _, _ = optimal_povm(ops, gap_tol=gap_tol)
    return Povm(tuple(elems))


def _final_block(states, final: Povm, n: int) -> float:
    return float(sum(3 * np.real(np.vdot(s, final[x] @ s)) for x, s in enumerate(states[:n])))


def _random_states(rng: np.random.Generator) -> tuple:
    return tuple(random_ket(rng, DIM) for _ in range(N_INPUTS))


def _run_single(config: SeesawConfig, initial: Strategy | None, rng: np.random.Generator, restart: int) -> SeesawTrace:
    mode = config.mode
    n_final = config.final_outcomes
    if initial is not None:
        states, dich, final = initial.states, initial.dichotomic, initial.final
        if mode is Mode.FIXED_FINAL and config.final_povm is not None:
            final = config.final_povm
    else:
        states = _random_states(rng)
        dich = update_dichotomic(states)
        if mode is Mode.FIXED_FINAL:
            final = config.final_povm if config.final_povm is not None else protocol_povm()
        else:
            final = pad_final(update_final_povm(states, n_final))
    current = Strategy(states, dich, final)
    w = score(current)
    history, halves = [w], [w]
    degenerate = 0
    converged = False
    for _ in range(config.max_iters):
        start = w
        states, deg = update_states(dich, final)
        degenerate += deg
        w_new = score(Strategy(states, dich, final))
        halves.append(w_new)
        dich = update_dichotomic(states)
        w_new = score(Strategy(states, dich, final))
        halves.append(w_new)
        if mode is not Mode.FIXED_FINAL:
            try:
                candidate = pad_final(update_final_povm(states, n_final))
            except SolverNotConverged as exc:
                log.warning("final-measurement solve failed in restart %d: %s", restart, exc)
                candidate = None
            # keep the old measurement unless the new one is at least as good
            if candidate is not None and _final_block(states, candidate, n_final) >= _final_block(states, final, n_final):
                final = candidate
            w_new = score(Strategy(states, dich, final))
            halves.append(w_new)
        w = w_new
        history.append(w)
        if w - start < config.tol:
            converged = True
            break
    best = Strategy(states, dich, final)
    report_povm = Povm(tuple(final.elements[:n_final]), tol=final.tol)
    projectivity = projectivity_report(report_povm)
    projectivity["projective"] = is_projective(report_povm)
    return SeesawTrace(history, best, converged, projectivity, halves, restart, degenerate)


def run_seesaw(config: SeesawConfig, initial: Strategy | None = None) -> SeesawTrace:
    """Best-of-restarts see-saw.

    Restart ``r`` draws its initial states from the ``r``-th child of
    ``SeedSequence(rng_seed)``, so results do not depend on execution order.
    With an ``initial`` strategy the first restart starts from it.
    Ties in W go to the lowest restart index.
    """
    children = np.random.SeedSequence(config.rng_seed).spawn(config.restarts)
    best = None
    for r, child in enumerate(children):
        start = initial if (r == 0 and initial is not None) else None
        trace = _run_single(config, start, np.random.default_rng(child), r)
        log.debug("restart %d: W = %.8f after %d sweeps", r, trace.score, len(trace.history) - 1)
        if best is None or trace.score > best.score:
            best = trace
    return best
