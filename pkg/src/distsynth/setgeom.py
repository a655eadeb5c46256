"""Dense polytope and box primitives with support-function calculus.

The disturbance sets handled throughout the package are convex hulls of
axis-aligned boxes.  Support functions over such hulls have the closed form

    h(p) = max_j ( p'T c_j + |p'T| e_j )

over the member boxes (c_j, e_j), so inclusion certificates never need an
explicit halfspace description of the hull.  Membership in the hull is an
exact linear program through the scaled-point (perspective) change of
variables q_j = beta_j p_j.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations, product

import numpy as np

from . import _accel
from .lp_solver import INFEASIBLE, OPTIMAL, UNBOUNDED, LpProblem, solve_lp
import scipy.sparse as sp


def _freeze(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


class GeometryError(ValueError):
    """Raised for empty/unbounded polytopes and dimension mismatches."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box {center + d : -halfwidth <= d <= halfwidth}."""

    center: np.ndarray
    halfwidth: np.ndarray

    def __post_init__(self):
        c = _freeze(self.center)
        h = _freeze(self.halfwidth)
        if c.ndim != 1 or c.shape != h.shape:
            raise GeometryError("center and halfwidth must be 1-D with equal length")
        if np.any(h < 0):
            raise GeometryError("halfwidth must be nonnegative")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "halfwidth", h)

    @property
    def dim(self) -> int:
        return self.center.size

    def corners(self) -> np.ndarray:
        """All 2^dim corner points, one per row."""
        signs = np.array(list(product((-1.0, 1.0), repeat=self.dim)))
        return self.center + signs * self.halfwidth


@dataclass(frozen=True)
class BoxHullSet:
    """Convex hull of boxes of a common dimension; the disturbance set."""

    boxes: tuple[Box, ...]

    def __post_init__(self):
        boxes = tuple(self.boxes)
        if len(boxes) == 0:
            raise GeometryError("at least one box is required")
        dim = boxes[0].dim
        if any(b.dim != dim for b in boxes):
            raise GeometryError("all boxes must share one dimension")
        object.__setattr__(self, "boxes", boxes)

    @property
    def dim(self) -> int:
        return self.boxes[0].dim

    @property
    def n_boxes(self) -> int:
        return len(self.boxes)

    @cached_property
    def centers(self) -> np.ndarray:
        return _freeze(np.stack([b.center for b in self.boxes]))

    @cached_property
    def halfwidths(self) -> np.ndarray:
        return _freeze(np.stack([b.halfwidth for b in self.boxes]))

    def scaled(self, factor: float) -> "BoxHullSet":
        return BoxHullSet(tuple(Box(factor * b.center, abs(factor) * b.halfwidth) for b in self.boxes))


@dataclass(frozen=True)
class HPolytope:
    """Halfspace set {y : G y <= g}."""

    G: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        G = _freeze(np.atleast_2d(self.G))
        g = _freeze(self.g)
        if g.ndim != 1 or G.shape[0] != g.size:
            raise GeometryError("G and g row counts differ")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "g", g)

    @property
    def dim(self) -> int:
        return self.G.shape[1]

    @property
    def n_rows(self) -> int:
        return self.G.shape[0]

    def contains(self, y: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(np.all(self.G @ np.asarray(y, dtype=float) <= self.g + tol))


@dataclass(frozen=True)
class LtiSystem:
    """x+ = A x + B w,  y = C x + D w with a strictly stable A."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = _freeze(np.atleast_2d(self.A))
        B = _freeze(np.atleast_2d(self.B))
        C = _freeze(np.atleast_2d(self.C))
        D = _freeze(np.atleast_2d(self.D))
        n_x = A.shape[0]
        if A.shape != (n_x, n_x):
            raise GeometryError("A must be square")
        if B.shape[0] != n_x:
            raise GeometryError("B row count must match A")
        if C.shape[1] != n_x:
            raise GeometryError("C column count must match A")
        if D.shape != (C.shape[0], B.shape[1]):
            raise GeometryError("D must be n_y x n_w")
        rho = spectral_radius(A)
        if rho >= 1.0:
            raise GeometryError(f"A must be strictly stable, got spectral radius {rho:.6g}")
        for name, mat in (("A", A), ("B", B), ("C", C), ("D", D)):
            object.__setattr__(self, name, mat)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_w(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]


def spectral_radius(A) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.asarray(A, dtype=float)))))


def stacked_identity(n: int) -> np.ndarray:
    """[I; -I], the outward normals of the unit infinity-norm ball."""
    return np.vstack([np.eye(n), -np.eye(n)])


# ---------------------------------------------------------------------------
# support functions


def _image_direction(T, p, dim) -> np.ndarray:
    T = np.atleast_2d(np.asarray(T, dtype=float))
    p = np.asarray(p, dtype=float).ravel()
    if T.shape[0] != p.size:
        raise GeometryError(f"direction length {p.size} does not match {T.shape[0]} rows of T")
    if T.shape[1] != dim:
        raise GeometryError(f"T has {T.shape[1]} columns, set dimension is {dim}")
    return T.T @ p


def support_box(T, p, box: Box) -> float:
    """Support of the linear image T*box in direction p."""
    r = _image_direction(T, p, box.dim)
    return float(r @ box.center + np.abs(r) @ box.halfwidth)


def support_hull(T, p, W: BoxHullSet) -> float:
    """Support of T*W in direction p: the maximum over member boxes."""
    r = _image_direction(T, p, W.dim)
    vals = W.centers @ r + W.halfwidths @ np.abs(r)
    return float(vals.max())


def support_rows(T, M, W: BoxHullSet) -> np.ndarray:
    """Stack support_hull(T, row, W) over the rows of M."""
    T = np.atleast_2d(np.asarray(T, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != T.shape[0]:
        raise GeometryError("M columns must match T rows")
    if T.shape[1] != W.dim:
        raise GeometryError("T columns must match set dimension")
    R = M @ T
    vals = R @ W.centers.T + np.abs(R) @ W.halfwidths.T
    return vals.max(axis=1)


def support_argmax_hull(T, p, W: BoxHullSet) -> np.ndarray:
    """A point of W attaining support_hull(T, p, W)."""
    r = _image_direction(T, p, W.dim)
    vals = W.centers @ r + W.halfwidths @ np.abs(r)
    j = int(np.argmax(vals))
    return W.centers[j] + np.sign(r) * W.halfwidths[j]


# ---------------------------------------------------------------------------
# membership


@dataclass(frozen=True)
class Membership:
    """Result of a hull membership test with the decomposition witness."""

    inside: bool
    residual: float
    weights: np.ndarray | None = None
    points: np.ndarray | None = None

    def __bool__(self) -> bool:
        return self.inside


def contains_point(W: BoxHullSet, w, tol: float = 1e-9) -> Membership:
    """Exact hull membership via the perspective LP.

    Minimizes the infinity-norm residual of reconstructing w as
    sum_j q_j with q_j in beta_j-scaled boxes and sum_j beta_j = 1; the
    point is inside iff the optimal residual is at most tol.  On success
    the per-box weights and points of the decomposition are returned.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    w = np.asarray(w, dtype=float).ravel()
    n, N = W.dim, W.n_boxes
    if w.size != n:
        raise GeometryError("point dimension mismatch")
    # variables: q (N*n), beta (N), t (1)
    nv = N * n + N + 1
    rows, cols, data, b_ub = [], [], [], []
    r = 0
    for j in range(N):
        for k in range(n):
            # q_jk - beta_j (c_jk + h_jk) <= 0
            rows += [r, r]
            cols += [j * n + k, N * n + j]
            data += [1.0, -(W.centers[j, k] + W.halfwidths[j, k])]
            b_ub.append(0.0)
            r += 1
            # -q_jk + beta_j (c_jk - h_jk) <= 0
            rows += [r, r]
            cols += [j * n + k, N * n + j]
            data += [-1.0, W.centers[j, k] - W.halfwidths[j, k]]
            b_ub.append(0.0)
            r += 1
    for k in range(n):
        # sum_j q_jk - t <= w_k   and   -sum_j q_jk - t <= -w_k
        for sgn in (1.0, -1.0):
            for j in range(N):
                rows.append(r)
                cols.append(j * n + k)
                data.append(sgn)
            rows.append(r)
            cols.append(nv - 1)
            data.append(-1.0)
            b_ub.append(sgn * w[k])
            r += 1
    a_ub = sp.csr_matrix((data, (rows, cols)), shape=(r, nv))
    a_eq = sp.csr_matrix(
        ([1.0] * N, ([0] * N, list(range(N * n, N * n + N)))), shape=(1, nv)
    )
    c = np.zeros(nv)
    c[-1] = 1.0
    lb = np.full(nv, -np.inf)
    lb[N * n :] = 0.0
    out = solve_lp(LpProblem(c, a_ub, np.array(b_ub), a_eq, np.array([1.0]), lb=lb))
    if not out.optimal:
        raise RuntimeError(f"membership LP failed with status {out.status}")
    residual = float(out.objective)
    q = out.x[: N * n].reshape(N, n)
    beta = out.x[N * n : N * n + N]
    points = np.where(beta[:, None] > 1e-12, q / np.maximum(beta[:, None], 1e-12), W.centers)
    return Membership(residual <= tol, residual, beta, points)


# ---------------------------------------------------------------------------
# sampling and simulation


def sample(W: BoxHullSet, rng: np.random.Generator) -> np.ndarray:
    """Draw a point of W: simplex-uniform box weights, uniform box points."""
    e = rng.exponential(size=W.n_boxes)
    beta = e / e.sum()
    u = rng.uniform(-1.0, 1.0, size=(W.n_boxes, W.dim))
    return beta @ (W.centers + u * W.halfwidths)


def sample_batch(W: BoxHullSet, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` points of W at once; same per-point model as sample()."""
    e = rng.exponential(size=(count, W.n_boxes))
    beta = e / e.sum(axis=1, keepdims=True)
    u = rng.uniform(-1.0, 1.0, size=(count, W.n_boxes, W.dim))
    pts = W.centers[None, :, :] + u * W.halfwidths[None, :, :]
    return np.einsum("tn,tnd->td", beta, pts)


def simulate(sys: LtiSystem, W: BoxHullSet, x0, T: int, rng: np.random.Generator):
    """Simulate T steps driven by independent draws from W.

    Returns (X, Y, Wseq): state, output and disturbance trajectories with
    rows t = 0..T-1, where x(t+1) = A x(t) + B w(t) and y(t) = C x(t) + D w(t).
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != sys.n_x:
        raise GeometryError("x0 dimension mismatch")
    if W.dim != sys.n_w:
        raise GeometryError("disturbance dimension mismatch")
    w_seq = sample_batch(W, T, rng)
    X, Y = _accel.state_recursion(sys.A, sys.B, sys.C, sys.D, x0, w_seq)
    return X, Y, w_seq


# ---------------------------------------------------------------------------
# vertex enumeration and 2-D hull outlines

_MAX_ROWS = 30
_MAX_DIM = 4


def _extent_lp(P: HPolytope, direction: np.ndarray) -> None:
    c = -direction
    out = solve_lp(LpProblem(c, a_ub=sp.csr_matrix(P.G), b_ub=P.g))
    if out.status == UNBOUNDED:
        raise GeometryError("polytope is unbounded")
    if out.status == INFEASIBLE:
        raise GeometryError("polytope is empty")
    if out.status != OPTIMAL:
        raise RuntimeError(f"extent LP failed with status {out.status}")


def vertices_hpoly(P: HPolytope, tol: float = 1e-9, dedup_tol: float | None = None) -> np.ndarray:
    """Enumerate vertices of a bounded polytope by row-subset intersection.

    Practical for small descriptions only (up to 30 rows in dimension 4);
    larger instances should supply their vertex lists directly.  Candidate
    intersections are kept when they satisfy G y <= g + tol, and merged when
    closer than dedup_tol (default max(10 tol, 1e-7)).  Rows are returned in
    lexicographic order.
    """
    m, n = P.G.shape
    if m > _MAX_ROWS or n > _MAX_DIM:
        raise GeometryError(
            f"enumeration limited to {_MAX_ROWS} rows and dimension {_MAX_DIM}; supply vertices"
        )
    if m < n + 1:
        raise GeometryError("a bounded nonempty polytope needs at least n+1 rows")
    if dedup_tol is None:
        dedup_tol = max(10.0 * tol, 1e-7)
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        _extent_lp(P, e)
        _extent_lp(P, -e)
    found: list[np.ndarray] = []
    for idx in combinations(range(m), n):
        sub = P.G[list(idx)]
        if np.linalg.matrix_rank(sub, tol=1e-10) < n:
            continue
        y = np.linalg.solve(sub, P.g[list(idx)])
        if np.all(P.G @ y <= P.g + tol):
            if all(np.linalg.norm(y - v) > dedup_tol for v in found):
                found.append(y)
    if not found:
        raise GeometryError("no vertices found; polytope may be empty or degenerate")
    order = np.lexsort(np.array(found).T[::-1])
    return np.array(found)[order]


def _monotone_chain(points: np.ndarray) -> np.ndarray:
    pts = np.unique(np.round(points, 12), axis=0)
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def hull_outline(W: BoxHullSet) -> np.ndarray:
    """Counterclockwise boundary vertices of a planar hull of boxes."""
    if W.dim != 2:
        raise GeometryError("outline is defined for dimension 2 only")
    corners = np.vstack([b.corners() for b in W.boxes])
    return _monotone_chain(corners)


def matrix_power_inf_norm(A, s: int) -> float:
    """Infinity norm (max absolute row sum) of A^s by repeated multiplication."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if s < 0:
        raise ValueError("power must be nonnegative")
    P = np.eye(A.shape[0])
    for _ in range(s):
        P = P @ A
    return float(np.abs(P).sum(axis=1).max())
