"""Alternating LP minimization of the bilinear synthesis program.

The bilinear coupling w = sum_j beta_j wbar_j is linear once either factor is
frozen: the P step fixes the convex weights and optimizes the boxes together
with the driving points, the Q step fixes the per-group points and reweights
them.  Each step's optimum is feasible for the next, so the objective is
nonincreasing and the loop terminates for any positive tolerance.  A
multi-start refinement around the incumbent weights replaces nonlinear
polishing.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .encoder import SynthProblem, VariableLayout
from .lp_solver import LpProblem, solve_lp
from .setgeom import Box, BoxHullSet


class SynthesisError(RuntimeError):
    def __init__(self, message: str, lp: LpProblem | None = None):
        super().__init__(message)
        self.lp = lp


@dataclass
class SynthResult:
    W: BoxHullSet
    epsilon: np.ndarray
    objective: float
    history: list[float]
    termination: str
    iterations: int
    witness: dict


def uniform_beta(layout: VariableLayout) -> np.ndarray:
    return np.full(layout.dim_beta, 1.0 / layout.n_boxes)


def heuristic_beta(layout: VariableLayout) -> np.ndarray:
    """One-hot weights tying vertex i to box i; needs as many boxes as vertices."""
    if layout.n_boxes != layout.n_vertices:
        raise ValueError("one-hot weights need n_boxes == n_vertices")
    beta = np.zeros(layout.dim_beta)
    for i in range(layout.n_vertices):
        for slot in range(layout.n_slots):
            beta[layout.beta_entry(i, slot, i)] = 1.0
    return beta


def pad_beta(old: VariableLayout, new: VariableLayout, beta: np.ndarray) -> np.ndarray:
    """Re-embed weights into a layout with more boxes (zero on the new ones)."""
    if (old.n_vertices, old.horizon) != (new.n_vertices, new.horizon):
        raise ValueError("layouts must share vertices and horizon")
    if new.n_boxes < old.n_boxes:
        raise ValueError("target layout must not have fewer boxes")
    out = np.zeros(new.dim_beta)
    for i in range(old.n_vertices):
        for slot in range(old.n_slots):
            out[new.beta_group(i, slot)][: old.n_boxes] = beta[old.beta_group(i, slot)]
    return out


def boxes_from_x(problem: SynthProblem, x: np.ndarray) -> BoxHullSet:
    lay = problem.layout
    boxes = []
    for j in range(lay.n_boxes):
        center = x[lay.x_center(j)]
        halfwidth = np.clip(x[lay.x_halfwidth(j)], 0.0, None)
        boxes.append(Box(center, halfwidth))
    return BoxHullSet(tuple(boxes))


def _bilinear_rows_fixed_beta(problem: SynthProblem, beta, w_off, wbar_off, width):
    bil = problem.bilinear
    n_w = problem.layout.n_w
    rows_w = np.arange(bil.n_groups)[:, None] * n_w + np.arange(n_w)[None, :]
    # +1 on each w component
    r1 = rows_w.ravel()
    c1 = (w_off + bil.w_cols).ravel()
    d1 = np.ones(r1.size)
    # -beta_j on each wbar component
    r2 = np.repeat(rows_w[:, None, :], problem.layout.n_boxes, axis=1).ravel()
    c2 = (wbar_off + bil.wbar_cols).ravel()
    d2 = (-beta[bil.beta_cols])[:, :, None] * np.ones((1, 1, n_w))
    mat = sp.csr_matrix(
        (np.concatenate([d1, d2.ravel()]), (np.concatenate([r1, r2]), np.concatenate([c1, c2]))),
        shape=(bil.n_groups * n_w, width),
    )
    return mat


def _bilinear_rows_fixed_wbar(problem: SynthProblem, wbar, w_off, beta_off, width):
    bil = problem.bilinear
    n_w = problem.layout.n_w
    rows_w = np.arange(bil.n_groups)[:, None] * n_w + np.arange(n_w)[None, :]
    r1 = rows_w.ravel()
    c1 = (w_off + bil.w_cols).ravel()
    d1 = np.ones(r1.size)
    r2 = np.repeat(rows_w[:, None, :], problem.layout.n_boxes, axis=1).ravel()
    c2 = np.repeat((beta_off + bil.beta_cols)[:, :, None], n_w, axis=2).ravel()
    d2 = -wbar[bil.wbar_cols].ravel()
    mat = sp.csr_matrix(
        (np.concatenate([d1, d2]), (np.concatenate([r1, r2]), np.concatenate([c1, c2]))),
        shape=(bil.n_groups * n_w, width),
    )
    return mat


def p_step(problem: SynthProblem, beta: np.ndarray):
    """Fix the weights; solve for boxes, budgets, group points and slacks.

    Returns (x, w, wbar, z, objective).
    """
    lay = problem.layout
    nx, nw, nwb, nz = lay.dim_x, lay.dim_w, lay.dim_wbar, lay.dim_z
    width = nx + nw + nwb + nz
    w_off, wbar_off, z_off = nx, nx + nw, nx + nw + nwb

    def empty(rows, cols):
        return sp.csr_matrix((rows, cols))

    a_ub = sp.vstack(
        [
            sp.hstack([problem.a_x, empty(problem.a_x.shape[0], nw + nwb + nz)]),
            sp.hstack(
                [
                    problem.d_x,
                    empty(problem.d_x.shape[0], nw),
                    problem.d_wbar,
                    empty(problem.d_x.shape[0], nz),
                ]
            ),
            sp.hstack([empty(problem.e_z.shape[0], nx + nw + nwb), problem.e_z]),
        ],
        format="csr",
    )
    b_ub = np.concatenate([problem.b, np.zeros(problem.d_x.shape[0]), np.zeros(problem.e_z.shape[0])])
    a_eq = sp.vstack(
        [
            sp.hstack(
                [empty(problem.c_w.shape[0], nx), problem.c_w, empty(problem.c_w.shape[0], nwb), problem.c_z]
            ),
            _bilinear_rows_fixed_beta(problem, beta, w_off, wbar_off, width),
        ],
        format="csr",
    )
    b_eq = np.concatenate([problem.h, np.zeros(problem.bilinear.n_groups * lay.n_w)])

    c = np.zeros(width)
    c[z_off:] = problem.cost_z
    lb = np.full(width, -np.inf)
    for j in range(lay.n_boxes):
        lb[lay.x_halfwidth(j)] = 0.0
    lb[z_off + lay.z_eps().start : z_off + lay.z_eps().stop] = 0.0

    lp = LpProblem(c, a_ub, b_ub, a_eq, b_eq, lb=lb)
    out = solve_lp(lp)
    if not out.optimal:
        raise SynthesisError(f"box-fitting LP ended with status {out.status}", lp)
    sol = out.x
    return (
        sol[:nx],
        sol[w_off : w_off + nw],
        sol[wbar_off : wbar_off + nwb],
        sol[z_off:],
        float(out.objective),
    )


def q_step(problem: SynthProblem, wbar: np.ndarray):
    """Fix the group points; reweight them and refit the slacks.

    Returns (w, z, beta, objective).
    """
    lay = problem.layout
    nw, nb, nz = lay.dim_w, lay.dim_beta, lay.dim_z
    width = nw + nb + nz
    beta_off, z_off = nw, nw + nb

    def empty(rows, cols):
        return sp.csr_matrix((rows, cols))

    a_ub = sp.hstack([empty(problem.e_z.shape[0], nw + nb), problem.e_z], format="csr")
    b_ub = np.zeros(problem.e_z.shape[0])
    a_eq = sp.vstack(
        [
            sp.hstack([problem.c_w, empty(problem.c_w.shape[0], nb), problem.c_z]),
            sp.hstack(
                [empty(problem.t_beta.shape[0], nw), problem.t_beta, empty(problem.t_beta.shape[0], nz)]
            ),
            _bilinear_rows_fixed_wbar(problem, wbar, 0, beta_off, width),
        ],
        format="csr",
    )
    b_eq = np.concatenate(
        [problem.h, np.ones(problem.t_beta.shape[0]), np.zeros(problem.bilinear.n_groups * lay.n_w)]
    )
    c = np.zeros(width)
    c[z_off:] = problem.cost_z
    lb = np.full(width, -np.inf)
    lb[beta_off:z_off] = 0.0
    lb[z_off + lay.z_eps().start : z_off + lay.z_eps().stop] = 0.0

    lp = LpProblem(c, a_ub, b_ub, a_eq, b_eq, lb=lb)
    out = solve_lp(lp)
    if not out.optimal:
        raise SynthesisError(f"reweighting LP ended with status {out.status}", lp)
    sol = out.x
    return sol[:nw], sol[z_off:], sol[beta_off:z_off], float(out.objective)


def alternate(
    problem: SynthProblem,
    beta0: np.ndarray,
    zeta: float = 1e-4,
    max_iters: int = 100,
) -> SynthResult:
    """Alternate the two LPs until the objective improves by less than zeta."""
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    beta = np.asarray(beta0, dtype=float)
    history: list[float] = []
    prev_obj = None
    termination = "max-iterations"
    iterations = 0
    current = None
    for it in range(1, max_iters + 1):
        iterations = it
        try:
            x, w_p, wbar, z_p, p_obj = p_step(problem, beta)
        except SynthesisError as exc:
            raise SynthesisError(f"iteration {it}: {exc}", exc.lp) from exc
        history.append(p_obj)
        try:
            w, z, beta_new, q_obj = q_step(problem, wbar)
        except SynthesisError as exc:
            raise SynthesisError(f"iteration {it}: {exc}", exc.lp) from exc
        history.append(q_obj)
        current = (x, w, wbar, beta_new, z, q_obj)
        if prev_obj is not None and q_obj >= prev_obj - zeta:
            termination = "converged"
            break
        prev_obj = q_obj
        beta = beta_new
    x, w, wbar, beta_fin, z, obj = current
    return SynthResult(
        W=boxes_from_x(problem, x),
        epsilon=z[problem.layout.z_eps()].copy(),
        objective=obj,
        history=history,
        termination=termination,
        iterations=iterations,
        witness={"x": x, "w": w, "wbar": wbar, "beta": beta_fin, "z": z},
    )


def witness_residual(problem: SynthProblem, witness: dict) -> float:
    """Largest violation of any block by a (x, w, wbar, beta, z) witness."""
    x, w, wbar = witness["x"], witness["w"], witness["wbar"]
    beta, z = witness["beta"], witness["z"]
    worst = float(np.max(problem.a_x @ x - problem.b, initial=-np.inf))
    worst = max(worst, float(np.max(problem.d_x @ x + problem.d_wbar @ wbar, initial=-np.inf)))
    worst = max(worst, float(np.max(np.abs(problem.c_w @ w + problem.c_z @ z - problem.h), initial=-np.inf)))
    worst = max(worst, float(np.max(problem.e_z @ z, initial=-np.inf)))
    worst = max(worst, float(np.max(np.abs(problem.t_beta @ beta - 1.0), initial=-np.inf)))
    worst = max(worst, float(np.max(-beta, initial=-np.inf)))
    bil = problem.bilinear
    recon = np.einsum("gj,gjk->gk", beta[bil.beta_cols], wbar[bil.wbar_cols])
    worst = max(worst, float(np.max(np.abs(w[bil.w_cols] - recon))))
    return worst


def _jittered_beta(layout: VariableLayout, beta, rng, concentration: float = 50.0):
    out = np.empty_like(beta)
    for i in range(layout.n_vertices):
        for slot in range(layout.n_slots):
            grp = layout.beta_group(i, slot)
            out[grp] = rng.dirichlet(concentration * beta[grp] + 1e-3)
    return out


def refine(
    problem: SynthProblem,
    result: SynthResult,
    restarts: int,
    rng: np.random.Generator,
    zeta: float = 1e-4,
    max_iters: int = 100,
) -> SynthResult:
    """Multi-start alternation from weight jitter; never worse than the input.

    Restart weights are drawn up front from independent spawned streams, so
    the outcome does not depend on the worker-thread count
    (``DISTSYNTH_THREADS``, default 1).
    """
    if restarts <= 0:
        return result
    streams = rng.spawn(restarts)
    starts = [
        _jittered_beta(problem.layout, result.witness["beta"], stream) for stream in streams
    ]
    workers = int(os.environ.get("DISTSYNTH_THREADS", "1") or "1")

    def run(beta0):
        return alternate(problem, beta0, zeta=zeta, max_iters=max_iters)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            candidates = list(pool.map(run, starts))
    else:
        candidates = [run(b0) for b0 in starts]
    best = result
    for cand in candidates:
        if cand.objective < best.objective:
            best = cand
    return best
