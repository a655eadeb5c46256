"""Assembly of the bilinear synthesis program over hull-of-box disturbance sets.

The decision variables split into five groups:

    x    : box centers/halfwidths plus the per-term output budgets (Q, r)
    w    : one driving disturbance point per constraint vertex and step
    wbar : per-(vertex, step, box) points constrained to their boxes
    beta : convex weights tying each w to its wbar block
    z    : the coverage slack widths (eps) and per-vertex deviations b

All blocks are linear except the coupling w = sum_j beta_j wbar_j, which is
kept as an index descriptor so the two alternating LPs can substitute either
factor.  Row and column orders are fixed functions of the dimensions, so two
assemblies of the same input are bit-identical.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .rpi_params import RpiParams
from .setgeom import HPolytope, LtiSystem, stacked_identity


class EncodingError(ValueError):
    pass


def h_preset(name: str, n_y: int) -> np.ndarray:
    """Deviation-polytope normal matrices: 'box' or 'uniform:k' (planar)."""
    if name == "box":
        return stacked_identity(n_y)
    if name.startswith("uniform:"):
        if n_y != 2:
            raise EncodingError("uniform:k preset is defined for two outputs only")
        k = int(name.split(":", 1)[1])
        if k < 3:
            raise EncodingError("uniform preset needs at least 3 sides")
        ang = 2.0 * np.pi * np.arange(k) / k
        return np.column_stack([np.cos(ang), np.sin(ang)])
    raise EncodingError(f"unknown H preset {name!r}")


@dataclass(frozen=True)
class VariableLayout:
    """Offsets of the flattened variable groups."""

    n_boxes: int
    n_vertices: int
    horizon: int  # l
    s: int
    n_w: int
    n_y: int
    n_x: int
    m_y: int
    n_b: int

    @property
    def dim_x(self) -> int:
        return 2 * self.n_boxes * self.n_w + (self.s + 1) * self.m_y

    @property
    def dim_w(self) -> int:
        return self.n_vertices * (self.horizon + 1) * self.n_w

    @property
    def dim_wbar(self) -> int:
        return self.n_vertices * self.n_boxes * (self.horizon + 1) * self.n_w

    @property
    def dim_beta(self) -> int:
        return self.n_vertices * self.n_boxes * (self.horizon + 1)

    @property
    def dim_z(self) -> int:
        return self.n_b + self.n_vertices * self.n_y

    @property
    def n_slots(self) -> int:
        # slots 0..horizon-1 drive the state; slot `horizon` is the feedthrough point
        return self.horizon + 1

    def x_center(self, j: int) -> slice:
        base = 2 * j * self.n_w
        return slice(base, base + self.n_w)

    def x_halfwidth(self, j: int) -> slice:
        base = 2 * j * self.n_w + self.n_w
        return slice(base, base + self.n_w)

    def x_q(self, t: int) -> slice:
        base = 2 * self.n_boxes * self.n_w + t * self.m_y
        return slice(base, base + self.m_y)

    def x_r(self) -> slice:
        base = 2 * self.n_boxes * self.n_w + self.s * self.m_y
        return slice(base, base + self.m_y)

    def w_slot(self, i: int, slot: int) -> slice:
        base = (i * self.n_slots + slot) * self.n_w
        return slice(base, base + self.n_w)

    def wbar_slot(self, i: int, slot: int, j: int) -> slice:
        base = ((i * self.n_slots + slot) * self.n_boxes + j) * self.n_w
        return slice(base, base + self.n_w)

    def beta_entry(self, i: int, slot: int, j: int) -> int:
        return (i * self.n_slots + slot) * self.n_boxes + j

    def beta_group(self, i: int, slot: int) -> slice:
        base = (i * self.n_slots + slot) * self.n_boxes
        return slice(base, base + self.n_boxes)

    def z_eps(self) -> slice:
        return slice(0, self.n_b)

    def z_b(self, i: int) -> slice:
        base = self.n_b + i * self.n_y
        return slice(base, base + self.n_y)


@dataclass(frozen=True)
class BilinearMap:
    """Descriptor of w[group] = sum_j beta[group, j] * wbar[group, j].

    w_cols:    (n_groups, n_w) column indices into the w block
    beta_cols: (n_groups, N) column indices into the beta block
    wbar_cols: (n_groups, N, n_w) column indices into the wbar block
    """

    w_cols: np.ndarray
    beta_cols: np.ndarray
    wbar_cols: np.ndarray

    @property
    def n_groups(self) -> int:
        return self.w_cols.shape[0]


class _Triples:
    def __init__(self):
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.data: list[float] = []
        self.n_rows = 0

    def add(self, row: int, col: int, val: float) -> None:
        if val != 0.0:
            self.rows.append(row)
            self.cols.append(col)
            self.data.append(val)

    def add_block(self, row0: int, cols: slice, mat_row: np.ndarray) -> None:
        for k, v in enumerate(mat_row):
            self.add(row0, cols.start + k, float(v))

    def matrix(self, n_cols: int) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.data, (self.rows, self.cols)), shape=(self.n_rows, n_cols)
        )


def build_gbar(sys: LtiSystem, Y: HPolytope, params: RpiParams) -> list[np.ndarray]:
    """Per-term output maps (1-alpha)^-1 G C A^t for t = 0..s-1."""
    scale = 1.0 / (1.0 - params.alpha)
    out = []
    M = scale * (Y.G @ sys.C)
    for _ in range(params.s):
        out.append(M.copy())
        M = M @ sys.A
    return out


def output_rhs(gbar: list[np.ndarray], Y: HPolytope, params: RpiParams) -> np.ndarray:
    """Right-hand side g - lambda * sum_t |Gbar_t| 1 of the budget rows."""
    tail = sum(np.abs(G).sum(axis=1) for G in gbar)
    return Y.g - params.lam * tail


def encode_output_inclusion(
    gbar: list[np.ndarray],
    sys: LtiSystem,
    Y: HPolytope,
    params: RpiParams,
    layout: VariableLayout,
):
    """Rows bounding the reachable-output support by the budget variables.

    Per box j and term t:  Gbar_t B c_j + |Gbar_t B| e_j <= Q_t, and the
    feedthrough rows G D c_j + |G D| e_j <= r; finally the budget sums
    sum_t Q_t + r <= g - lambda sum_t |Gbar_t| 1.
    """
    rhs = output_rhs(gbar, Y, params)
    if np.min(rhs) < -1e-12 * max(1.0, float(np.max(np.abs(Y.g)))):
        warnings.warn(
            f"negative output budget at row {int(np.argmin(rhs))}; "
            "the synthesis problem is infeasible for these parameters",
            RuntimeWarning,
        )
    tri = _Triples()
    b: list[float] = []
    GD = Y.G @ sys.D
    for j in range(layout.n_boxes):
        c_cols = layout.x_center(j)
        e_cols = layout.x_halfwidth(j)
        for t in range(layout.s):
            GB = gbar[t] @ sys.B
            for i in range(layout.m_y):
                tri.add_block(tri.n_rows, c_cols, GB[i])
                tri.add_block(tri.n_rows, e_cols, np.abs(GB[i]))
                tri.add(tri.n_rows, layout.x_q(t).start + i, -1.0)
                b.append(0.0)
                tri.n_rows += 1
    for j in range(layout.n_boxes):
        c_cols = layout.x_center(j)
        e_cols = layout.x_halfwidth(j)
        for i in range(layout.m_y):
            tri.add_block(tri.n_rows, c_cols, GD[i])
            tri.add_block(tri.n_rows, e_cols, np.abs(GD[i]))
            tri.add(tri.n_rows, layout.x_r().start + i, -1.0)
            b.append(0.0)
            tri.n_rows += 1
    for i in range(layout.m_y):
        for t in range(layout.s):
            tri.add(tri.n_rows, layout.x_q(t).start + i, 1.0)
        tri.add(tri.n_rows, layout.x_r().start + i, 1.0)
        b.append(float(rhs[i]))
        tri.n_rows += 1
    return tri.matrix(layout.dim_x), np.array(b)


def encode_gamma_bound(sys: LtiSystem, gamma: float, layout: VariableLayout):
    """Rows keeping every box image B*box inside the gamma cube."""
    IB = stacked_identity(sys.n_x) @ sys.B
    tri = _Triples()
    b: list[float] = []
    for j in range(layout.n_boxes):
        c_cols = layout.x_center(j)
        e_cols = layout.x_halfwidth(j)
        for i in range(2 * sys.n_x):
            tri.add_block(tri.n_rows, c_cols, IB[i])
            tri.add_block(tri.n_rows, e_cols, np.abs(IB[i]))
            b.append(gamma)
            tri.n_rows += 1
    return tri.matrix(layout.dim_x), np.array(b)


def encode_origin(layout: VariableLayout):
    """Rows forcing the origin into the first box: |c_1| <= e_1."""
    tri = _Triples()
    b = [0.0] * (2 * layout.n_w)
    c_cols = layout.x_center(0)
    e_cols = layout.x_halfwidth(0)
    for sgn in (1.0, -1.0):
        for k in range(layout.n_w):
            tri.add(tri.n_rows, c_cols.start + k, sgn)
            tri.add(tri.n_rows, e_cols.start + k, -1.0)
            tri.n_rows += 1
    return tri.matrix(layout.dim_x), np.array(b)


def encode_vertex_reach(
    vertices: np.ndarray, sys: LtiSystem, layout: VariableLayout, H: np.ndarray
):
    """Vertex-coverage blocks: reach equalities, box membership of the
    per-group points, deviation rows H b_i <= eps, and the simplex rows.

    Returns (c_w, c_z, h, d_x, d_wbar, e_z, t_beta, bilinear).
    """
    l = layout.horizon
    if l < 1:
        raise EncodingError("horizon must be at least 1")
    # reach coefficients: slot t carries C A^(l-1-t) B, slot l carries D
    powers = [np.eye(sys.n_x)]
    for _ in range(l - 1):
        powers.append(powers[-1] @ sys.A)
    coeff = [sys.C @ powers[l - 1 - t] @ sys.B for t in range(l)] + [sys.D]

    c_tri, h_vals = _Triples(), []
    cz_tri = _Triples()
    for i in range(layout.n_vertices):
        b_cols = layout.z_b(i)
        for row in range(layout.n_y):
            for slot in range(layout.n_slots):
                c_tri.add_block(c_tri.n_rows, layout.w_slot(i, slot), coeff[slot][row])
            cz_tri.add(c_tri.n_rows, b_cols.start + row, 1.0)
            h_vals.append(float(vertices[i, row]))
            c_tri.n_rows += 1
    cz_tri.n_rows = c_tri.n_rows

    dx_tri, dw_tri = _Triples(), _Triples()
    for i in range(layout.n_vertices):
        for slot in range(layout.n_slots):
            for j in range(layout.n_boxes):
                wb = layout.wbar_slot(i, slot, j)
                cj = layout.x_center(j)
                ej = layout.x_halfwidth(j)
                for sgn in (1.0, -1.0):
                    for k in range(layout.n_w):
                        row = dx_tri.n_rows
                        dw_tri.add(row, wb.start + k, sgn)
                        dx_tri.add(row, cj.start + k, -sgn)
                        dx_tri.add(row, ej.start + k, -1.0)
                        dx_tri.n_rows += 1
                        dw_tri.n_rows = dx_tri.n_rows

    ez_tri = _Triples()
    for i in range(layout.n_vertices):
        b_cols = layout.z_b(i)
        for row in range(layout.n_b):
            ez_tri.add_block(ez_tri.n_rows, b_cols, H[row])
            ez_tri.add(ez_tri.n_rows, row, -1.0)
            ez_tri.n_rows += 1

    tb_tri = _Triples()
    for i in range(layout.n_vertices):
        for slot in range(layout.n_slots):
            grp = layout.beta_group(i, slot)
            for j in range(layout.n_boxes):
                tb_tri.add(tb_tri.n_rows, grp.start + j, 1.0)
            tb_tri.n_rows += 1

    groups = layout.n_vertices * layout.n_slots
    w_cols = np.empty((groups, layout.n_w), dtype=int)
    beta_cols = np.empty((groups, layout.n_boxes), dtype=int)
    wbar_cols = np.empty((groups, layout.n_boxes, layout.n_w), dtype=int)
    gidx = 0
    for i in range(layout.n_vertices):
        for slot in range(layout.n_slots):
            w_cols[gidx] = np.arange(layout.w_slot(i, slot).start, layout.w_slot(i, slot).stop)
            for j in range(layout.n_boxes):
                beta_cols[gidx, j] = layout.beta_entry(i, slot, j)
                wb = layout.wbar_slot(i, slot, j)
                wbar_cols[gidx, j] = np.arange(wb.start, wb.stop)
            gidx += 1

    return (
        c_tri.matrix(layout.dim_w),
        cz_tri.matrix(layout.dim_z),
        np.array(h_vals),
        dx_tri.matrix(layout.dim_x),
        dw_tri.matrix(layout.dim_wbar),
        ez_tri.matrix(layout.dim_z),
        tb_tri.matrix(layout.dim_beta),
        BilinearMap(w_cols, beta_cols, wbar_cols),
    )


@dataclass(frozen=True)
class SynthProblem:
    """Assembled constraint blocks of the synthesis program."""

    layout: VariableLayout
    sys: LtiSystem
    params: RpiParams
    vertices: np.ndarray
    H: np.ndarray
    gbar: tuple
    rhs_output: np.ndarray
    cost_z: np.ndarray
    a_x: sp.csr_matrix
    b: np.ndarray
    d_x: sp.csr_matrix
    d_wbar: sp.csr_matrix
    c_w: sp.csr_matrix
    c_z: sp.csr_matrix
    h: np.ndarray
    e_z: sp.csr_matrix
    t_beta: sp.csr_matrix
    bilinear: BilinearMap


def dedupe_vertices(vertices: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
    keep: list[np.ndarray] = []
    for v in vertices:
        if all(np.linalg.norm(v - u) > tol for u in keep):
            keep.append(v)
    return np.array(keep)


def assemble(
    sys: LtiSystem,
    Y: HPolytope,
    Y_vertices: np.ndarray,
    params: RpiParams,
    n_boxes: int,
    horizon: int,
    H: np.ndarray,
) -> SynthProblem:
    """Build the full problem for a vertex list of the constraint set."""
    if n_boxes < 1:
        raise EncodingError("need at least one box")
    vertices = dedupe_vertices(Y_vertices)
    if vertices.shape[1] != sys.n_y:
        raise EncodingError("vertex dimension mismatch")
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if H.shape[1] != sys.n_y:
        raise EncodingError("H column count must match the output dimension")
    layout = VariableLayout(
        n_boxes=n_boxes,
        n_vertices=vertices.shape[0],
        horizon=horizon,
        s=params.s,
        n_w=sys.n_w,
        n_y=sys.n_y,
        n_x=sys.n_x,
        m_y=Y.n_rows,
        n_b=H.shape[0],
    )
    gbar = build_gbar(sys, Y, params)
    a1, b1 = encode_output_inclusion(gbar, sys, Y, params, layout)
    a2, b2 = encode_gamma_bound(sys, params.gamma, layout)
    a3, b3 = encode_origin(layout)
    c_w, c_z, h, d_x, d_wbar, e_z, t_beta, bilinear = encode_vertex_reach(
        vertices, sys, layout, H
    )
    cost_z = np.zeros(layout.dim_z)
    cost_z[layout.z_eps()] = 1.0
    return SynthProblem(
        layout=layout,
        sys=sys,
        params=params,
        vertices=vertices,
        H=H,
        gbar=tuple(gbar),
        rhs_output=output_rhs(gbar, Y, params),
        cost_z=cost_z,
        a_x=sp.vstack([a1, a2, a3], format="csr"),
        b=np.concatenate([b1, b2, b3]),
        d_x=d_x,
        d_wbar=d_wbar,
        c_w=c_w,
        c_z=c_z,
        h=h,
        e_z=e_z,
        t_beta=t_beta,
        bilinear=bilinear,
    )
