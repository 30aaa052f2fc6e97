"""Small dense semidefinite programs.

Generic problems go to cvxopt's interior-point method; the POVM problem of the
see-saw has a dedicated barrier solver, :func:`optimal_povm`.

Everything is reduced to the linear-matrix-inequality form

    maximize  c . z   subject to   F0_k + sum_i z_i F_ik  >= 0   for each block k

with real symmetric blocks. Hermitian blocks go through :func:`real_embedding`.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from cvxopt import matrix, solvers

from .errors import SolverNotConverged

SOLVER_OPTIONS = {
    "show_progress": False,
    "abstol": 1e-10,
    "reltol": 1e-10,
    "feastol": 1e-10,
    "maxiters": 100,
}


def real_embedding(h: np.ndarray) -> np.ndarray:
    """Real symmetric ``[[Re H, -Im H], [Im H, Re H]]``; PSD iff ``H`` is."""
    h = np.asarray(h)
    if not np.iscomplexobj(h):
        return np.block([[h, np.zeros_like(h)], [np.zeros_like(h), h]])
    return np.block([[h.real, -h.imag], [h.imag, h.real]])


def hermitian_basis(d: int) -> list[np.ndarray]:
    """Orthonormal (trace inner product) basis of the d x d Hermitian matrices."""
    basis = []
    for i in range(d):
        e = np.zeros((d, d), dtype=complex)
        e[i, i] = 1
        basis.append(e)
    for i in range(d):
        for j in range(i + 1, d):
            s = np.zeros((d, d), dtype=complex)
            s[i, j] = s[j, i] = 1 / np.sqrt(2)
            a = np.zeros((d, d), dtype=complex)
            a[i, j] = -1j / np.sqrt(2)
            a[j, i] = 1j / np.sqrt(2)
            basis += [s, a]
    return basis


@lru_cache(maxsize=None)
def _basis_array(d: int) -> np.ndarray:
    hb = np.array(hermitian_basis(d))
    hb.setflags(write=False)
    return hb


@dataclass
class LmiSolution:
    z: np.ndarray
    value: float
    status: str
    residuals: dict


def solve_lmi(
    c: np.ndarray,
    f0: Sequence[np.ndarray],
    fs: Sequence[Sequence[np.ndarray]],
    *,
    gap_tol: float = 1e-6,
    feas_tol: float = 1e-7,
    options: dict | None = None,
) -> LmiSolution:
    """Maximize ``c . z`` subject to ``f0[k] + sum_i z_i fs[k][i] >= 0`` for every block ``k``.

    Raises :class:`SolverNotConverged` if the returned point misses the gap or
    feasibility tolerance.
    """
    c = np.asarray(c, dtype=float)
    m = c.size
    gs, hs = [], []
    for k, base in enumerate(f0):
        cols = np.column_stack([-np.asarray(fs[k][i], dtype=float).reshape(-1, order="F") for i in range(m)])
        gs.append(matrix(cols))
        hs.append(matrix(np.asarray(base, dtype=float)))
    opts = dict(SOLVER_OPTIONS)
    opts.update(options or {})
    sol = solvers.sdp(matrix(-c), Gs=gs, hs=hs, options=opts)
    if sol["x"] is None:
        raise SolverNotConverged(f"SDP solver returned no point ({sol['status']})", {"status": sol["status"]})
    z = np.array(sol["x"]).reshape(-1)
    min_eig = min(
        float(np.linalg.eigvalsh(np.asarray(base) + sum(z[i] * np.asarray(fs[k][i]) for i in range(m)))[0])
        for k, base in enumerate(f0)
    )
    primal = -float(sol["primal objective"])
    dual = -float(sol["dual objective"])
    residuals = {
        "status": sol["status"],
        "gap": abs(float(sol["gap"])) if sol["gap"] is not None else float("nan"),
        "objective_gap": abs(primal - dual),
        "primal_infeasibility": float(sol["primal infeasibility"] or 0.0),
        "dual_infeasibility": float(sol["dual infeasibility"] or 0.0),
        "min_eigenvalue": min_eig,
        "iterations": int(sol["iterations"]),
    }
    value = float(c @ z)
    ok = residuals["objective_gap"] <= gap_tol and min_eig >= -feas_tol
    if not ok:
        raise SolverNotConverged(
            f"SDP solve did not reach gap {gap_tol:g} / feasibility {feas_tol:g} ({sol['status']})",
            residuals,
        )
    return LmiSolution(z, value, sol["status"], residuals)


def optimal_povm_lmi(objective_ops: Sequence[np.ndarray], *, gap_tol: float = 1e-7) -> tuple[list[np.ndarray], float, dict]:
    """Maximize ``sum_x tr(A_x N_x)`` over POVMs through the generic LMI solver.

    The last element is eliminated as ``I - sum(others)``, so completeness is
    exact up to floating point. Slower than :func:`optimal_povm`; kept as an
    independent route for cross-checks.
    """
    ops = [np.asarray(a, dtype=complex) for a in objective_ops]
    n = len(ops)
    d = ops[0].shape[0]
    if n == 1:
        return [np.eye(d, dtype=complex)], float(np.real(np.trace(ops[0]))), {"status": "trivial"}
    hb = hermitian_basis(d)
    nb = len(hb)
    emb_basis = [real_embedding(h) for h in hb]
    zero = np.zeros((2 * d, 2 * d))
    c = np.array([np.real(np.trace((ops[x] - ops[-1]) @ h)) for x in range(n - 1) for h in hb])
    f0 = [zero] * (n - 1) + [real_embedding(np.eye(d))]
    fs = []
    for block in range(n):
        row = []
        for x in range(n - 1):
            for k in range(nb):
                if block == n - 1:
                    row.append(-emb_basis[k])
                elif block == x:
                    row.append(emb_basis[k])
                else:
                    row.append(zero)
        fs.append(row)
    sol = solve_lmi(c, f0, fs, gap_tol=gap_tol, feas_tol=1e-9)
    t = sol.z.reshape(n - 1, nb)
    elems = [sum(t[x, k] * hb[k] for k in range(nb)) for x in range(n - 1)]
    elems.append(np.eye(d) - sum(elems))
    value = float(sum(np.real(np.trace(a @ e)) for a, e in zip(ops, elems)))
    return elems, value, sol.residuals


def _barrier_step_length(c: float, e: np.ndarray) -> float:
    """Minimize ``c a - sum_i log(1 + a e_i)`` over feasible ``a > 0`` by safeguarded Newton."""
    amax = np.inf if e.min() >= 0 else -1.0 / e.min()
    a = min(1.0, 0.99 * amax)
    for _ in range(50):
        q = e / (1.0 + a * e)
        nxt = a - (c - q.sum()) / (q @ q)
        if nxt <= 0:
            nxt = 0.5 * a
        elif nxt >= amax:
            nxt = 0.5 * (a + amax)
        if abs(nxt - a) <= 1e-10 * max(1.0, a):
            return nxt
        a = nxt
    return a


def optimal_povm(
    objective_ops: Sequence[np.ndarray],
    *,
    gap_tol: float = 1e-8,
    max_newton: int = 50,
    mu_factor: float = 0.01,
) -> tuple[list[np.ndarray], float, dict]:
    """Maximize ``sum_x tr(A_x N_x)`` over POVMs ``{N_x}`` with ``len(objective_ops)`` outcomes.

    Barrier path-following on the dual ``min tr(Y) s.t. Y >= A_x``. For each
    barrier weight ``mu`` Newton's method (with an exact line search) centers
    ``tr(Y)/mu - sum_x log det(Y - A_x)``; the center gives the primal point
    ``N_x = mu (Y - A_x)^-1`` with duality gap about ``n d mu``. The primal point is
    rescaled to sum exactly to the identity and the reported gap
    ``tr(Y) - sum_x tr(A_x N_x)`` is measured, not estimated.

    Returns ``(elements, value, residuals)``; raises :class:`SolverNotConverged`
    if the measured gap exceeds ``10 * gap_tol``.
    """
    ops = np.array([np.asarray(a, dtype=complex) for a in objective_ops])
    ops = 0.5 * (ops + np.conj(np.swapaxes(ops, 1, 2)))
    n, d = ops.shape[0], ops.shape[1]
    eye = np.eye(d)
    if n == 1:
        return [eye.astype(complex)], float(np.real(np.trace(ops[0]))), {"status": "trivial", "gap": 0.0}
    hb = _basis_array(d)
    hb_trace = np.real(np.trace(hb, axis1=1, axis2=2))
    scale = max(1.0, float(np.max(np.abs(np.linalg.eigvalsh(ops)))))
    y = (scale + 1.0) * eye.astype(complex)
    mu = scale / (n * d)
    steps = 0
    while True:
        for _ in range(max_newton):
            s_mats = y[None] - ops
            invs = np.linalg.inv(s_mats)
            # p[x, k] = H_k S_x^-1
            p = np.einsum("kij,xjl->xkil", hb, invs)
            grad = hb_trace / mu - np.real(np.einsum("xkii->k", p))
            hess = np.real(np.einsum("xkij,xlji->kl", p, p))
            step = -np.linalg.solve(hess, grad)
            lam2 = float(-grad @ step)
            steps += 1
            dy = np.tensordot(step, hb, axes=1)
            if lam2 < 1e-2:
                alpha = 1.0
            else:
                li = np.linalg.inv(np.linalg.cholesky(s_mats))
                e = np.linalg.eigvalsh(li @ dy[None] @ np.conj(np.swapaxes(li, 1, 2))).ravel()
                alpha = _barrier_step_length(float(np.real(np.trace(dy))) / mu, e)
            y = y + alpha * dy
            if lam2 < 1e-4:
                break
        if n * d * mu < 0.5 * gap_tol:
            break
        mu *= mu_factor
    elems = mu * np.linalg.inv(y[None] - ops)
    elems = 0.5 * (elems + np.conj(np.swapaxes(elems, 1, 2)))
    w, v = np.linalg.eigh(elems.sum(axis=0))
    g = (v / np.sqrt(w)) @ v.conj().T
    elems = g[None] @ elems @ g[None]
    elems = 0.5 * (elems + np.conj(np.swapaxes(elems, 1, 2)))
    value = float(np.real(np.einsum("xij,xji->", ops, elems)))
    slack = float(np.min(np.linalg.eigvalsh(y[None] - ops)))
    residuals = {
        "status": "optimal",
        "dual_value": float(np.real(np.trace(y))),
        "dual_min_slack": slack,
        "gap": float(np.real(np.trace(y))) - value,
        "barrier_weight": mu,
        "newton_steps": steps,
        "completeness_residual": float(np.max(np.abs(elems.sum(axis=0) - eye))),
        "min_eigenvalue": float(np.min(np.linalg.eigvalsh(elems))),
    }
    ok = abs(residuals["gap"]) <= 10 * gap_tol and residuals["min_eigenvalue"] >= -1e-9 and slack >= 0
    if not ok:
        residuals["status"] = "not_converged"
        raise SolverNotConverged(f"POVM solve missed gap {gap_tol:g}", residuals)
    return list(elems), value, residuals
