"""Two-species Lotka-Volterra competition in the (Y, X) plane.

    Y' = Y (d_bar - Y - b X)
    X' = X (m_bar - c Y - X)

Equilibria, the classical five-way classification, spectral data of the
saddle in the bistable regime, the quadratic local approximation of its
stable manifold, and the global manifold obtained by integrating backwards
in time from seeds on either side of the saddle.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .model import ValidationError

RTOL = 1e-8
ATOL = 1e-10
EQ_RTOL = 1e-12
# backward manifold integration runs to 10x the rates, where the curve's
# magnitudes amplify local error; tighter control keeps the residual small
SEP_RTOL = 1e-11
SEP_ATOL = 1e-13


@dataclass(frozen=True)
class LVParams:
    d_bar: float
    m_bar: float
    b: float
    c: float

    def __post_init__(self):
        for name in ("d_bar", "m_bar", "b", "c"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValidationError(f"params.{name} must be > 0, got {val}")

    def rhs(self, t, y):
        Y, X = y
        return [Y * (self.d_bar - Y - self.b * X), X * (self.m_bar - self.c * Y - X)]

    def jacobian(self, Y: float, X: float) -> np.ndarray:
        return np.array(
            [
                [self.d_bar - 2 * Y - self.b * X, -self.b * Y],
                [-self.c * X, self.m_bar - self.c * Y - 2 * X],
            ]
        )


class LVCase(str, enum.Enum):
    COEXISTENCE = "Coexistence_i"
    EXCLUSION_U = "ExclusionU_ii"
    EXCLUSION_V = "ExclusionV_iii"
    DEGENERATE = "Degenerate_iv"
    BISTABLE = "Bistable_v"
    NON_GENERIC = "NonGeneric"


class Basin(str, enum.Enum):
    P_WINS = "Pwins"  # attracted to (d_bar, 0)
    X_WINS = "Xwins"  # attracted to (0, m_bar)
    ON_SEPARATRIX = "OnSeparatrix"


@dataclass(frozen=True)
class EquilibriumReport:
    P1: tuple[float, float] | None
    P2: tuple[float, float]
    P3: tuple[float, float]
    origin: tuple[float, float]
    case_tag: LVCase
    lambda1: float = float("nan")
    lambda2: float = float("nan")
    k: float = float("nan")
    a2: float = float("nan")


def _close(a: float, b: float, rtol: float = EQ_RTOL) -> bool:
    return abs(a - b) <= rtol * max(abs(a), abs(b))


def coexistence_point(p: LVParams) -> tuple[float, float] | None:
    """Raw interior equilibrium ``(Y*, X*)``; ``None`` when ``bc = 1``."""
    det = 1.0 - p.b * p.c
    if _close(p.b * p.c, 1.0):
        return None
    return ((p.d_bar - p.b * p.m_bar) / det, (p.m_bar - p.c * p.d_bar) / det)


def classify(p: LVParams) -> LVCase:
    bc_one = _close(p.b * p.c, 1.0)
    c_edge = _close(p.c * p.d_bar, p.m_bar)
    b_edge = _close(p.b * p.m_bar, p.d_bar)
    if bc_one and b_edge:
        return LVCase.DEGENERATE
    if c_edge or b_edge:
        return LVCase.NON_GENERIC
    c_small = p.c * p.d_bar < p.m_bar
    b_small = p.b * p.m_bar < p.d_bar
    if c_small and b_small:
        return LVCase.COEXISTENCE
    if not c_small and b_small:
        return LVCase.EXCLUSION_U
    if c_small and not b_small:
        return LVCase.EXCLUSION_V
    return LVCase.BISTABLE


def saddle_spectrum(p: LVParams) -> tuple[float, float, float]:
    """Eigenvalues ``lambda1 < 0 < lambda2`` at the saddle and the separatrix slope ``k``."""
    if classify(p) is not LVCase.BISTABLE:
        raise ValidationError(f"saddle data need bistable parameters, got {classify(p).value}")
    Ys, Xs = coexistence_point(p)
    disc = math.sqrt(Xs * Xs + Ys * Ys + (4 * p.b * p.c - 2) * Xs * Ys)
    lam1 = 0.5 * (-(Xs + Ys) - disc)
    lam2 = 0.5 * (-(Xs + Ys) + disc)
    k = (Ys - Xs - disc) / (-2 * p.b * Ys)
    return lam1, lam2, k


def local_quadratic(p: LVParams) -> tuple[float, float]:
    """Slope and quadratic coefficient of the stable manifold at the saddle.

    Matching powers of ``(Y - Y*)`` in ``h'(Y) f(Y, h) = g(Y, h)`` gives
    ``a2 = ((c - 1) k + (1 - b) k^2) / (-Y* - X* - 3 lambda1)``.
    """
    lam1, _, k = saddle_spectrum(p)
    Ys, Xs = coexistence_point(p)
    a2 = ((p.c - 1) * k + (1 - p.b) * k * k) / (-Ys - Xs - 3 * lam1)
    return k, a2


def equilibria(p: LVParams) -> EquilibriumReport:
    case = classify(p)
    P1 = coexistence_point(p)
    if P1 is not None and not (P1[0] > 0 and P1[1] > 0 and math.isfinite(P1[0] + P1[1])):
        P1 = None
    lam1 = lam2 = k = a2 = float("nan")
    if case is LVCase.BISTABLE:
        lam1, lam2, k = saddle_spectrum(p)
        _, a2 = local_quadratic(p)
    return EquilibriumReport(
        P1=P1,
        P2=(p.d_bar, 0.0),
        P3=(0.0, p.m_bar),
        origin=(0.0, 0.0),
        case_tag=case,
        lambda1=lam1,
        lambda2=lam2,
        k=k,
        a2=a2,
    )


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class LVTrajectory:
    t: np.ndarray
    Y: np.ndarray
    X: np.ndarray

    @property
    def final(self) -> tuple[float, float]:
        return float(self.Y[-1]), float(self.X[-1])


def integrate_lv(
    p: LVParams,
    Y0: float,
    X0: float,
    t_end: float,
    n_samples: int = 1001,
    rtol: float = RTOL,
    atol: float = ATOL,
) -> LVTrajectory:
    """Forward trajectory with the Dormand-Prince 5(4) pair, sampled uniformly in time.

    Positive components are integrated as logarithms, so a species decaying
    towards zero can never undershoot it; a zero component stays zero (the
    axes are invariant).
    """
    if Y0 < 0 or X0 < 0:
        raise ValidationError("initial data must be nonnegative")
    t_eval = np.linspace(0.0, t_end, n_samples)
    alive = np.array([Y0 > 0, X0 > 0])
    y0 = np.log(np.where(alive, [Y0, X0], 1.0))

    def rhs(t, z):
        # capped so that a wild trial stage is rejected instead of overflowing
        Y = math.exp(min(z[0], 700.0)) if alive[0] else 0.0
        X = math.exp(min(z[1], 700.0)) if alive[1] else 0.0
        return [
            p.d_bar - Y - p.b * X if alive[0] else 0.0,
            p.m_bar - p.c * Y - X if alive[1] else 0.0,
        ]

    sol = solve_ivp(rhs, (0.0, t_end), y0, method="RK45", t_eval=t_eval, rtol=rtol, atol=atol)
    if sol.status != 0:
        raise RuntimeError(f"LV integration failed: {sol.message}")
    Y = np.exp(sol.y[0]) if alive[0] else np.zeros_like(sol.t)
    X = np.exp(sol.y[1]) if alive[1] else np.zeros_like(sol.t)
    return LVTrajectory(sol.t, Y, X)


# ---------------------------------------------------------------------------
# separatrix


@dataclass(frozen=True)
class SeparatrixCurve:
    """Graph ``X = h(Y)`` of the saddle's stable manifold as a sorted polyline."""

    Y: np.ndarray
    X: np.ndarray
    saddle: tuple[float, float]
    local_k: float
    local_a2: float
    params: LVParams

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.Y, self.X])

    def h(self, Y):
        Y = np.asarray(Y, dtype=float)
        if np.any(Y < self.Y[0]) or np.any(Y > self.Y[-1]):
            raise ValueError(
                f"Y outside separatrix range [{self.Y[0]:.6g}, {self.Y[-1]:.6g}]; "
                "extend the curve (larger t_max) instead of extrapolating"
            )
        return np.interp(Y, self.Y, self.X)

    def residual(self) -> np.ndarray:
        """Functional-equation residual ``Y(d-Y-bh)h' - h(m-cY-h)`` at interior samples.

        ``h'`` is the second-order centred difference on the non-uniform samples.
        """
        p = self.params
        Y, X = self.Y[1:], self.X[1:]  # drop the appended origin
        dh = np.gradient(X, Y)
        res = Y * (p.d_bar - Y - p.b * X) * dh - X * (p.m_bar - p.c * Y - X)
        return res[1:-1]


def _default_eps(p: LVParams) -> float:
    Ys, Xs = coexistence_point(p)
    return 1e-6 * math.hypot(Ys, Xs)


def global_separatrix(
    p: LVParams,
    eps: float | None = None,
    t_max: float = 200.0,
    rtol: float = SEP_RTOL,
    atol: float = SEP_ATOL,
    max_chord: float = 2e-3,
    y_floor: float = 1e-8,
    box_factor: float = 10.0,
) -> SeparatrixCurve:
    """Stable manifold of the saddle by backward-time integration.

    Both branches start at ``P1 +/- eps * v`` with ``v`` the unit stable
    eigenvector and run in reversed time until ``Y < y_floor``, a coordinate
    exceeds ``box_factor * max(d_bar, m_bar)``, or ``t_max`` elapses.  Each
    accepted RK step is subdivided through the dense output so that no chord
    of the returned polyline is longer than ``max_chord`` (relative to the
    saddle's distance from the origin).
    """
    lam1, _, k = saddle_spectrum(p)
    _, a2 = local_quadratic(p)
    Ys, Xs = coexistence_point(p)
    if eps is None:
        eps = _default_eps(p)
    if eps <= 0:
        raise ValidationError("eps must be > 0")
    vhat = np.array([1.0, k]) / math.hypot(1.0, k)
    box = box_factor * max(p.d_bar, p.m_bar)
    scale = math.hypot(Ys, Xs)

    def back(t, y):
        f = p.rhs(t, y)
        return [-f[0], -f[1]]

    def hit_floor(t, y):
        return y[0] - y_floor

    def leave_box(t, y):
        return box - max(y[0], y[1])

    hit_floor.terminal = True
    leave_box.terminal = True

    branches = []
    for sign in (-1.0, 1.0):
        y0 = np.array([Ys, Xs]) + sign * eps * vhat
        sol = solve_ivp(
            back,
            (0.0, t_max),
            y0,
            method="RK45",
            rtol=rtol,
            atol=atol,
            dense_output=True,
            events=(hit_floor, leave_box),
        )
        if sol.status < 0:
            raise RuntimeError(f"separatrix integration failed: {sol.message}")
        ts = sol.t
        chord = np.hypot(np.diff(sol.y[0]), np.diff(sol.y[1]))
        pieces = np.maximum(4, np.ceil(chord / (max_chord * scale)).astype(int))
        fine = [ts[:1]] + [
            np.linspace(a, b_, m + 1)[1:] for a, b_, m in zip(ts[:-1], ts[1:], pieces)
        ]
        branches.append(sol.sol(np.concatenate(fine)))

    lower, upper = branches
    Y = np.concatenate([[0.0], lower[0][::-1], [Ys], upper[0]])
    X = np.concatenate([[0.0], lower[1][::-1], [Xs], upper[1]])
    order = np.argsort(Y, kind="stable")
    Y, X = Y[order], X[order]
    if not (np.all(np.diff(Y) > 0) and np.all(np.diff(X) > 0)):
        raise ValidationError(
            "separatrix samples are not strictly monotone; the seed offset eps is "
            "probably too large (try eps ~ 1e-6 * |P1|)"
        )
    return SeparatrixCurve(Y, X, (Ys, Xs), k, a2, p)


def basin_query(curve: SeparatrixCurve, Y0: float, X0: float, tol: float = 1e-9) -> Basin:
    """Which exclusion equilibrium attracts ``(Y0, X0)``, by comparing ``X0`` with ``h(Y0)``."""
    if Y0 < 0 or X0 < 0:
        raise ValidationError("basin queries need nonnegative coordinates")
    gap = X0 - float(curve.h(Y0))
    if abs(gap) <= tol:
        return Basin.ON_SEPARATRIX
    return Basin.P_WINS if gap < 0 else Basin.X_WINS
