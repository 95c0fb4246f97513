"""Competition model with trait diffusion and nonlocal (mass) interactions.

    u_t = u_xx + u (d(x) - r1 - b r2),   v_t = v_xx + v (m(x) - c r1 - r2)

on a truncated trait interval with homogeneous Dirichlet boundaries.

Steady states follow from two principal-eigenvalue problems: the stationary
profiles solve ``-u'' = u (d - s1)`` and ``-v'' = v (m - s2)`` where the shifts
``s1 = r1 + b r2`` and ``s2 = c r1 + r2`` are fixed by requiring a zero
principal eigenvalue.  The masses then follow from a 2x2 linear system.

Time stepping splits the growth term ``d(x) - R(t)`` into the linear local part
``d(x) - s1``, which joins the diffusion in a Crank-Nicolson solve, and the
scalar ``s1 - R(t)``, which is applied as an exponential factor with a Heun
mass predictor.  A scalar factor commutes with the linear operator, so the
splitting adds no error of its own, the discrete steady profile is an exact
fixed point, and ``u = w(t) * u_lin`` holds exactly at the discrete level.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp

from .model import (
    ModelParams,
    PopulationState,
    SimulationError,
    TraitGrid,
    ValidationError,
    quadrature,
)
from .phase_plane import Basin, LVParams, SeparatrixCurve, basin_query, global_separatrix
from .spectral import Tridiagonal, principal_shift

BC_RTOL = 1e-12
NEG_TOL = 1e-12  # relative to the current sup norm


class InadmissibleSteadyState(ValidationError):
    """The 2x2 mass system has a nonpositive component."""

    def __init__(self, message, s1, s2, r1_bar, r2_bar):
        super().__init__(message)
        self.s1, self.s2, self.r1_bar, self.r2_bar = s1, s2, r1_bar, r2_bar


def _check_bc(params: ModelParams):
    if abs(params.b * params.c - 1.0) <= BC_RTOL:
        raise ValidationError(
            "bc = 1: the mass system r1 + b r2 = s1, c r1 + r2 = s2 is singular "
            "and the diffusive model is not covered for this value"
        )


def solve_mass_system(s1: float, s2: float, b: float, c: float) -> tuple[float, float]:
    """Solve ``r1 + b r2 = s1``, ``c r1 + r2 = s2``."""
    det = 1.0 - b * c
    if abs(det) <= BC_RTOL:
        raise ValidationError("bc = 1: singular mass system")
    return (s1 - b * s2) / det, (s2 - c * s1) / det


@dataclass(frozen=True)
class SteadyStateSolution:
    """Stationary profiles; ``K1``/``K2`` stay NaN until projections are attached."""

    u_bar: np.ndarray
    v_bar: np.ndarray
    s1: float
    s2: float
    r1_bar: float
    r2_bar: float
    K1: float = float("nan")
    K2: float = float("nan")

    def with_projections(self, grid: TraitGrid, u0, v0) -> "SteadyStateSolution":
        K1, K2 = projection_constants(self, u0, v0, grid)
        return replace(self, K1=K1, K2=K2)


def principal_shifts(params: ModelParams, grid: TraitGrid):
    """``(s1, phi_u, s2, phi_v)`` for the rates ``d`` and ``m``."""
    s1, phi = principal_shift(params.d, grid)
    s2, psi = principal_shift(params.m, grid)
    return s1, phi, s2, psi


def steady_state(params: ModelParams, grid: TraitGrid, u0=None, v0=None) -> SteadyStateSolution:
    """Stationary solution with profiles scaled to masses ``r1_bar``, ``r2_bar``.

    Raises ``InadmissibleSteadyState`` when either mass would be nonpositive.
    When ``u0``/``v0`` are given, the projection constants are filled in.
    """
    _check_bc(params)
    s1, phi, s2, psi = principal_shifts(params, grid)
    r1, r2 = solve_mass_system(s1, s2, params.b, params.c)
    if not (r1 > 0 and r2 > 0):
        raise InadmissibleSteadyState(
            f"inadmissible steady state: r1_bar={r1:.6g}, r2_bar={r2:.6g} (both must be > 0)",
            s1, s2, r1, r2,
        )
    # phi, psi have unit integral
    ss = SteadyStateSolution(r1 * phi, r2 * psi, s1, s2, r1, r2)
    if u0 is not None and v0 is not None:
        ss = ss.with_projections(grid, u0, v0)
    return ss


def projection_constants(ss: SteadyStateSolution, u0, v0, grid: TraitGrid) -> tuple[float, float]:
    """``K1 = int u_bar u0 / int u_bar^2`` and likewise ``K2``."""
    du = quadrature(grid, ss.u_bar * ss.u_bar)
    dv = quadrature(grid, ss.v_bar * ss.v_bar)
    if not (du > 0 and dv > 0):
        raise ValidationError("steady profiles vanish identically; projections undefined")
    u0 = np.asarray(u0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    return quadrature(grid, ss.u_bar * u0) / du, quadrature(grid, ss.v_bar * v0) / dv


# ---------------------------------------------------------------------------
# prediction


class PdeOutcome(str, enum.Enum):
    COEXIST = "Coexist"
    U_WINS = "UWins"
    V_WINS = "VWins"
    ON_SEPARATRIX = "OnSeparatrix"


@dataclass(frozen=True)
class PdePrediction:
    """Predicted limit.  ``u_limit``/``v_limit`` are ``None`` on the separatrix."""

    outcome: PdeOutcome
    steady: SteadyStateSolution
    scale: float = float("nan")
    u_limit: np.ndarray | None = None
    v_limit: np.ndarray | None = None
    separatrix_gap: float = float("nan")  # K2 r2_bar - h(K1 r1_bar)

    @property
    def r1_limit(self) -> float:
        if self.outcome is PdeOutcome.COEXIST:
            return self.steady.r1_bar
        if self.outcome is PdeOutcome.U_WINS:
            return self.steady.s1
        if self.outcome is PdeOutcome.V_WINS:
            return 0.0
        return float("nan")

    @property
    def r2_limit(self) -> float:
        if self.outcome is PdeOutcome.COEXIST:
            return self.steady.r2_bar
        if self.outcome is PdeOutcome.V_WINS:
            return self.steady.s2
        if self.outcome is PdeOutcome.U_WINS:
            return 0.0
        return float("nan")


def pde_lv_params(ss: SteadyStateSolution, params: ModelParams) -> LVParams:
    """LV system whose separatrix decides the winner: rates ``s1`` and ``s2``."""
    return LVParams(d_bar=ss.s1, m_bar=ss.s2, b=params.b, c=params.c)


def predict_pde_outcome(
    params: ModelParams,
    grid: TraitGrid,
    u0,
    v0,
    separatrix: SeparatrixCurve | None = None,
    tol: float = 1e-9,
) -> PdePrediction:
    """Long-time limit from the steady state and the projections of the initial data."""
    ss = steady_state(params, grid, u0, v0)
    if params.b * params.c < 1:
        return PdePrediction(PdeOutcome.COEXIST, ss, 1.0, ss.u_bar, ss.v_bar)
    if separatrix is None:
        separatrix = global_separatrix(pde_lv_params(ss, params))
    Y, X = ss.K1 * ss.r1_bar, ss.K2 * ss.r2_bar
    gap = X - float(separatrix.h(Y))
    basin = basin_query(separatrix, Y, X, tol=tol)
    zero = np.zeros(grid.n)
    if basin is Basin.P_WINS:
        scale = ss.s1 / ss.r1_bar
        return PdePrediction(PdeOutcome.U_WINS, ss, scale, scale * ss.u_bar, zero, gap)
    if basin is Basin.X_WINS:
        scale = ss.s2 / ss.r2_bar
        return PdePrediction(PdeOutcome.V_WINS, ss, scale, zero, scale * ss.v_bar, gap)
    return PdePrediction(PdeOutcome.ON_SEPARATRIX, ss, separatrix_gap=gap)


# ---------------------------------------------------------------------------
# time stepping


class CrankNicolson:
    """``y -> (I - dt/2 A)^{-1} (I + dt/2 A) y`` on interior nodes, zero on the boundary.

    ``A = D2 + diag(q)`` with the three-point second difference.
    """

    def __init__(self, q_values, grid: TraitGrid, dt: float):
        if not (dt > 0 and grid.spacing > 0):
            raise ValidationError("Crank-Nicolson needs dt > 0 and positive spacing")
        h2 = grid.spacing ** 2
        q = np.asarray(q_values, dtype=float)[1:-1]
        self.a_diag = -2.0 / h2 + q
        self.a_off = 1.0 / h2
        m = q.size
        off = np.full(m - 1, -0.5 * dt * self.a_off)
        self._solver = Tridiagonal(off, 1.0 - 0.5 * dt * self.a_diag, off)
        self.dt = dt

    def apply_A(self, y):
        """``A y`` for an interior vector."""
        out = self.a_diag * y
        out[1:] += self.a_off * y[:-1]
        out[:-1] += self.a_off * y[1:]
        return out

    def __call__(self, y_full):
        y = np.asarray(y_full, dtype=float)[1:-1]
        rhs = y + 0.5 * self.dt * self.apply_A(y)
        out = np.zeros(y.size + 2)
        out[1:-1] = self._solver.solve(rhs)
        return out


class PdeStepper:
    """One-step map for the diffusive model at a fixed ``dt``.

    The reference shifts default to the principal shifts of ``d`` and ``m``.
    """

    def __init__(self, params: ModelParams, grid: TraitGrid, dt: float, shifts=None):
        if shifts is None:
            s1, _, s2, _ = principal_shifts(params, grid)
        else:
            s1, s2 = shifts
        self.params, self.grid, self.dt = params, grid, dt
        self.s1, self.s2 = float(s1), float(s2)
        self.cn_u = CrankNicolson(params.d.sample(grid) - self.s1, grid, dt)
        self.cn_v = CrankNicolson(params.m.sample(grid) - self.s2, grid, dt)
        self.w = grid.weights

    def linear(self, u, v):
        """Linear companion step: diffusion plus ``d - s1`` (``m - s2``), no competition."""
        return self.cn_u(u), self.cn_v(v)

    def step(self, u, v):
        """Full nonlocal step on arrays; returns ``(u, v, log_factor_u, log_factor_v)``."""
        b, c, dt, w = self.params.b, self.params.c, self.dt, self.w
        r1, r2 = w @ u, w @ v
        gu, gv = r1 + b * r2, c * r1 + r2
        ul, vl = self.linear(u, v)
        # Heun predictor on the scalar part
        fu, fv = dt * (self.s1 - gu), dt * (self.s2 - gv)
        r1p, r2p = math.exp(fu) * (w @ ul), math.exp(fv) * (w @ vl)
        fu = dt * (self.s1 - 0.5 * (gu + r1p + b * r2p))
        fv = dt * (self.s2 - 0.5 * (gv + c * r1p + r2p))
        return math.exp(fu) * ul, math.exp(fv) * vl, fu, fv


def _clip_negatives(a, name, t):
    lo = a.min()
    if lo < 0:
        if lo < -NEG_TOL * max(1.0, float(np.abs(a).max())):
            raise SimulationError(f"{name} went negative (min {lo:.3e}) at t={t}", {"t": t, name: a})
        np.maximum(a, 0.0, out=a)
    return a


def imex_step(
    state: PopulationState, params: ModelParams, grid: TraitGrid, dt: float, stepper: PdeStepper | None = None
) -> PopulationState:
    """Advance ``state`` by one step of ``dt``.

    Pass a prebuilt ``PdeStepper`` when stepping repeatedly; building one
    solves two eigenproblems.
    """
    if stepper is None:
        stepper = PdeStepper(params, grid, dt)
    u, v, _, _ = stepper.step(state.u, state.v)
    t = state.t + dt
    return PopulationState(grid, _clip_negatives(u, "u", t), _clip_negatives(v, "v", t), t)


@dataclass(frozen=True)
class PdeSimConfig:
    t_end: float
    dt: float = 1e-2
    record_every: int = 10

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"sim.dt must be > 0, got {self.dt}")
        if not self.t_end >= self.dt:
            raise ValidationError(f"sim.t_end must be >= dt, got {self.t_end}")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValidationError(f"sim.record_every must be a positive integer, got {self.record_every}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class PdeDiagnostics:
    """Recorded series.  ``dist_u`` is relative to ``max |u_limit|`` unless the limit is zero.

    With no prediction available the distances are NaN.
    """

    t: list = field(default_factory=list)
    r1: list = field(default_factory=list)
    r2: list = field(default_factory=list)
    dist_u: list = field(default_factory=list)
    dist_v: list = field(default_factory=list)
    prediction: PdePrediction | None = None

    COLUMNS = ("t", "r1", "r2", "dist_u", "dist_v")

    def append(self, **row):
        for name in self.COLUMNS:
            getattr(self, name).append(float(row[name]))

    def array(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)

    def rows(self):
        return zip(*(getattr(self, name) for name in self.COLUMNS))


def profile_distance(a, limit) -> float:
    """``max|a - limit| / max|limit|``, or ``max|a|`` when the limit is zero."""
    if limit is None:
        return float("nan")
    scale = float(np.abs(limit).max())
    err = float(np.abs(a - limit).max())
    return err / scale if scale > 0 else err


def run_pde_sim(
    params: ModelParams,
    grid: TraitGrid,
    u0,
    v0,
    config: PdeSimConfig,
    prediction: PdePrediction | None = None,
    stepper: PdeStepper | None = None,
) -> tuple[PopulationState, PdeDiagnostics]:
    """Integrate to ``config.t_end``.

    Distances are measured to the limit profiles of ``prediction``.  When no
    prediction is passed one is computed; if the steady state is inadmissible
    the run proceeds with NaN distances.  The run aborts when a mass exceeds
    ten times ``max(sup d, r1(0))`` (resp. ``max(sup m, r2(0))``).
    """
    state = PopulationState(grid, u0, v0, 0.0)
    u, v = state.u.copy(), state.v.copy()
    u[0] = u[-1] = v[0] = v[-1] = 0.0
    if prediction is None:
        try:
            prediction = predict_pde_outcome(params, grid, u, v)
        except InadmissibleSteadyState:
            prediction = None
    if stepper is None:
        shifts = (prediction.steady.s1, prediction.steady.s2) if prediction else None
        stepper = PdeStepper(params, grid, config.dt, shifts)
    w = grid.weights
    bound1 = 10 * max(float(params.d.sample(grid).max()), w @ u)
    bound2 = 10 * max(float(params.m.sample(grid).max()), w @ v)
    ulim = prediction.u_limit if prediction else None
    vlim = prediction.v_limit if prediction else None

    diag = PdeDiagnostics(prediction=prediction)

    def record(t):
        diag.append(
            t=t, r1=w @ u, r2=w @ v, dist_u=profile_distance(u, ulim), dist_v=profile_distance(v, vlim)
        )

    record(0.0)
    n = config.n_steps
    for i in range(1, n + 1):
        t = i * config.dt
        u, v, _, _ = stepper.step(u, v)
        _clip_negatives(u, "u", t)
        _clip_negatives(v, "v", t)
        if i % config.record_every == 0 or i == n:
            r1, r2 = w @ u, w @ v
            if not (math.isfinite(r1) and math.isfinite(r2)):
                raise SimulationError(f"non-finite density at t={t}", {"t": t, "u": u, "v": v})
            if r1 > bound1 or r2 > bound2:
                raise SimulationError(
                    f"mass blow-up at t={t}: r1={r1:.6g}, r2={r2:.6g} exceed 10x a-priori bounds",
                    {"t": t, "u": u, "v": v},
                )
            record(t)
    return PopulationState(grid, u, v, n * config.dt), diag


# ---------------------------------------------------------------------------
# linear companion and reduced system


@dataclass(frozen=True)
class LinearRun:
    """Masses and steady-profile projections of the linear companion system."""

    t: np.ndarray
    lambda1: np.ndarray  # int u_lin
    lambda2: np.ndarray
    proj_u: np.ndarray  # int u_bar u_lin
    proj_v: np.ndarray

    def conservation_drift(self) -> float:
        """Largest relative change of the projections per unit time."""
        T = self.t[-1] - self.t[0]
        du = np.abs(self.proj_u - self.proj_u[0]).max() / abs(self.proj_u[0])
        dv = np.abs(self.proj_v - self.proj_v[0]).max() / abs(self.proj_v[0])
        return float(max(du, dv) / T)


def run_linear_companion(
    params: ModelParams,
    grid: TraitGrid,
    ss: SteadyStateSolution,
    u0,
    v0,
    config: PdeSimConfig,
    stepper: PdeStepper | None = None,
) -> LinearRun:
    """Integrate ``u_t = u_xx + u (d - s1)``, ``v_t = v_xx + v (m - s2)`` with the same operator."""
    if stepper is None:
        stepper = PdeStepper(params, grid, config.dt, (ss.s1, ss.s2))
    w = grid.weights
    u = np.array(u0, dtype=float)
    v = np.array(v0, dtype=float)
    u[0] = u[-1] = v[0] = v[-1] = 0.0
    ts, l1, l2, pu, pv = [], [], [], [], []

    def record(t):
        ts.append(t)
        l1.append(w @ u)
        l2.append(w @ v)
        pu.append(w @ (ss.u_bar * u))
        pv.append(w @ (ss.v_bar * v))

    record(0.0)
    n = config.n_steps
    for i in range(1, n + 1):
        u, v = stepper.linear(u, v)
        if i % config.record_every == 0 or i == n:
            record(i * config.dt)
    return LinearRun(*(np.array(a) for a in (ts, l1, l2, pu, pv)))


@dataclass(frozen=True)
class WZSolution:
    t: np.ndarray
    w: np.ndarray
    z: np.ndarray


def _as_function(series):
    if callable(series):
        return series
    if np.isscalar(series):
        val = float(series)
        return lambda t: val
    ts, vals = series
    ts = np.asarray(ts, dtype=float)
    vals = np.asarray(vals, dtype=float)
    return lambda t: float(np.interp(t, ts, vals))


def reduced_wz(
    lambda1_series,
    lambda2_series,
    params: ModelParams,
    ss: SteadyStateSolution,
    t_end: float,
    w0: float = 1.0,
    z0: float = 1.0,
    n_samples: int = 1001,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> WZSolution:
    """Amplitudes ``w``, ``z`` with ``u = w u_lin`` and ``v = z v_lin``.

        w' = -w (w l1 + b z l2 - s1),   z' = -z (c w l1 + z l2 - s2)

    Each series is a constant, a callable of ``t``, or a ``(times, values)``
    pair that is linearly interpolated (held constant past its last time).
    """
    b, c = params.b, params.c
    s1 = ss.r1_bar + b * ss.r2_bar
    s2 = c * ss.r1_bar + ss.r2_bar
    l1 = _as_function(lambda1_series)
    l2 = _as_function(lambda2_series)

    def rhs(t, y):
        w, z = y
        a, g = l1(t), l2(t)
        return [-w * (w * a + b * z * g - s1), -z * (c * w * a + z * g - s2)]

    t_eval = np.linspace(0.0, t_end, n_samples)
    sol = solve_ivp(rhs, (0.0, t_end), [w0, z0], method="RK45", t_eval=t_eval, rtol=rtol, atol=atol)
    if sol.status != 0:
        raise SimulationError(f"reduced system integration failed: {sol.message}")
    return WZSolution(sol.t, sol.y[0], sol.y[1])
