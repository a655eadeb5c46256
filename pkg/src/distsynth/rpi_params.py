"""Certification constants and the (s, alpha, lambda) parameter search.

For a horizon s the constants

    L[s]   = sum_{t<s} |G C A^t| 1          (per output-constraint row)
    theta  = min_i g_i / L_i[s]             (rows with L_i = 0 excluded)
    M[s]   = || sum_{t<s} |[I;-I] A^t| 1 ||_inf
    zeta_s = ||A^s||_inf

reduce the invariant-set inclusion requirements to three scalar inequalities
in (alpha, lambda):

    (a) lambda <= (1 - alpha) theta
    (b) (gamma + lambda) zeta_s <= alpha lambda
    (c) (alpha gamma + lambda) M[s] <= (1 - alpha) mu

For fixed alpha > zeta_s the feasible lambda form a closed interval whose
endpoints are explicit, so the two-variable maximization of alpha + lambda
collapses to a one-dimensional concave search over alpha.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .setgeom import HPolytope, LtiSystem

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class ParamSearchError(RuntimeError):
    """Search exhausted the horizon budget without a feasible pair."""

    def __init__(self, message: str, trail):
        super().__init__(message)
        self.trail = trail


@dataclass(frozen=True)
class RpiConstants:
    s: int
    L_s: np.ndarray
    theta_s: float
    M_s: float
    zeta_s: float


@dataclass(frozen=True)
class RpiParams:
    s: int
    alpha: float
    lam: float
    gamma: float
    mu: float

    def __post_init__(self):
        if not (self.s >= 1 and 0.0 <= self.alpha < 1.0 and 0.0 <= self.lam <= 1.0):
            raise ValueError("parameters out of range")
        if self.gamma <= 0 or self.mu <= 0:
            raise ValueError("gamma and mu must be positive")


class ConstantsAccumulator:
    """Incremental constants: each step() appends one horizon term."""

    def __init__(self, sys: LtiSystem, Y: HPolytope):
        if np.any(Y.g <= 0):
            raise ValueError("constraint offsets must be strictly positive")
        if Y.dim != sys.n_y:
            raise ValueError("constraint set dimension mismatch")
        self._A = sys.A
        self._g = Y.g
        self._GC_pow = Y.G @ sys.C  # G C A^t for the next term
        self._A_pow = np.eye(sys.n_x)  # A^t for the next term
        self._L = np.zeros(Y.n_rows)
        self._row_sums = np.zeros(sys.n_x)
        self._s = 0

    def step(self) -> RpiConstants:
        self._L = self._L + np.abs(self._GC_pow).sum(axis=1)
        self._row_sums = self._row_sums + np.abs(self._A_pow).sum(axis=1)
        self._GC_pow = self._GC_pow @ self._A
        self._A_pow = self._A_pow @ self._A
        self._s += 1
        active = self._L > 0
        theta = float(np.min(self._g[active] / self._L[active])) if active.any() else np.inf
        return RpiConstants(
            s=self._s,
            L_s=self._L.copy(),
            theta_s=theta,
            M_s=float(self._row_sums.max()),
            zeta_s=float(np.abs(self._A_pow).sum(axis=1).max()),
        )


def compute_constants(sys: LtiSystem, Y: HPolytope, s: int) -> RpiConstants:
    """Constants at horizon s from a fresh summation."""
    if s < 1:
        raise ValueError("horizon must be at least 1")
    acc = ConstantsAccumulator(sys, Y)
    for _ in range(s - 1):
        acc.step()
    return acc.step()


def _golden_max(f, lo: float, hi: float, iters: int = 200) -> float:
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _bisect(pred, lo: float, hi: float, iters: int = 200) -> float:
    """Smallest x in [lo, hi] with pred(x) true; pred(hi) must hold."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def solve_Hs(consts: RpiConstants, gamma: float, mu: float):
    """Maximize alpha + lambda subject to (a)-(c); None when infeasible.

    The feasible-slack function U(alpha) - L(alpha) is concave (a minimum of
    affine functions minus a convex hyperbola), so feasibility, the feasible
    alpha-interval and the concave objective alpha + U(alpha) are all
    resolved by golden-section and bisection; ties are broken toward the
    smallest maximizing alpha.
    """
    if gamma <= 0 or mu <= 0:
        raise ValueError("gamma and mu must be positive")
    theta, M, zeta = consts.theta_s, consts.M_s, consts.zeta_s
    if zeta >= 1.0:
        return None

    def lam_hi(a: float) -> float:
        cap = ((1.0 - a) * mu - a * gamma * M) / M
        if np.isfinite(theta):
            cap = min(cap, (1.0 - a) * theta)
        return min(cap, 1.0)

    def lam_lo(a: float) -> float:
        if zeta == 0.0:
            return 0.0
        return gamma * zeta / (a - zeta) if a > zeta else np.inf

    def slack(a: float) -> float:
        return lam_hi(a) - lam_lo(a)

    lo = 0.0 if zeta == 0.0 else zeta * (1.0 + 1e-14) + 1e-300
    hi = 1.0 - 1e-14
    a_peak = _golden_max(slack, lo, hi)
    if slack(lo) > slack(a_peak):
        a_peak = lo
    if slack(a_peak) < 0.0:
        return None

    a_left = a_peak if slack(lo) >= 0.0 else _bisect(lambda a: slack(a) >= 0.0, lo, a_peak)
    if slack(hi) >= 0.0:
        a_right = hi
    else:
        # mirrored bisection: largest feasible alpha in [a_peak, hi]
        a_right = -_bisect(lambda a: slack(-a) >= 0.0, -hi, -a_peak)

    def objective(a: float) -> float:
        return a + lam_hi(a) if slack(a) >= 0.0 else -np.inf

    a_star = _golden_max(objective, a_left, a_right)
    best = max((a_left, a_right, a_star), key=objective)
    f_best = objective(best)
    # smallest alpha attaining the maximum (concave => sublevel interval)
    tie = 1e-12 * max(1.0, abs(f_best))
    a_min = _bisect(lambda a: objective(a) >= f_best - tie, a_left, best)
    if objective(a_left) >= f_best - tie:
        a_min = a_left
    return float(a_min), float(max(lam_hi(a_min), lam_lo(a_min)))


def select_params(
    sys: LtiSystem,
    Y: HPolytope,
    gamma: float,
    mu: float,
    s_max: int = 1000,
) -> RpiParams:
    """Smallest horizon with a feasible (alpha, lambda), found incrementally."""
    if s_max < 1:
        raise ValueError("s_max must be at least 1")
    acc = ConstantsAccumulator(sys, Y)
    trail = []
    for _ in range(s_max):
        consts = acc.step()
        sol = solve_Hs(consts, gamma, mu)
        if sol is not None:
            alpha, lam = sol
            return RpiParams(s=consts.s, alpha=alpha, lam=lam, gamma=gamma, mu=mu)
        trail.append((consts.s, consts.zeta_s, consts.theta_s, consts.M_s))
    tail = ", ".join(
        f"(s={s}, zeta={z:.3e}, theta={t:.3e}, M={m:.4g})" for s, z, t, m in trail[-5:]
    )
    raise ParamSearchError(
        f"no feasible (alpha, lambda) up to s_max={s_max}; last horizons: {tail}", trail
    )
