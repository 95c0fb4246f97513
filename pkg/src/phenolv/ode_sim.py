"""Mutation-free competition model with nonlocal (mass) interactions.

    u_t = u (d(x) - r1 - b r2),   v_t = v (m_bar - c r1 - r2),
    r1 = int u dx,  r2 = int v dx.

Every trait evolves by its own exponential factor, so stepping is done on the
exponent: positivity and supports are preserved exactly.  The masses inside a
step are the average of the start-of-step values and a predicted end-of-step
value (Heun), which makes the scheme second order.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    ConcentrationMetrics,
    ModelParams,
    PopulationState,
    SimulationError,
    TraitGrid,
    ValidationError,
    concentration_metrics,
    peak_of,
    quadrature,
    support_mask,
)
from .phase_plane import Basin, LVParams, SeparatrixCurve, basin_query, global_separatrix

EQ_RTOL = 1e-12


@dataclass(frozen=True)
class OdeSimConfig:
    t_end: float
    dt: float = 1e-3
    record_every: int = 100
    eps_conc: float | None = None  # defaults to 3 grid spacings

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"sim.dt must be > 0, got {self.dt}")
        if not self.t_end >= self.dt:
            raise ValidationError(f"sim.t_end must be >= dt, got {self.t_end}")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValidationError(f"sim.record_every must be a positive integer, got {self.record_every}")
        if self.eps_conc is not None and not self.eps_conc > 0:
            raise ValidationError(f"sim.eps_conc must be > 0, got {self.eps_conc}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class OdeDiagnostics:
    t: list = field(default_factory=list)
    r1: list = field(default_factory=list)
    r2: list = field(default_factory=list)
    lyapunov: list = field(default_factory=list)
    I1: list = field(default_factory=list)
    I2: list = field(default_factory=list)
    conc_frac: list = field(default_factory=list)
    argmax_u: list = field(default_factory=list)
    final_metrics: ConcentrationMetrics | None = None

    COLUMNS = ("t", "r1", "r2", "lyapunov", "I1", "I2", "conc_frac", "argmax_u")

    def append(self, **row):
        for name in self.COLUMNS:
            getattr(self, name).append(float(row[name]))

    def array(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)

    def rows(self):
        return zip(*(getattr(self, name) for name in self.COLUMNS))

    def lyapunov_violation(self) -> float:
        """Largest decrease of the Lyapunov series relative to its max magnitude."""
        L = self.array("lyapunov")
        L = L[np.isfinite(L)]
        if L.size < 2:
            return 0.0
        drop = np.max(-np.diff(L), initial=0.0)
        return float(max(drop, 0.0) / max(np.abs(L).max(), 1e-300))


# ---------------------------------------------------------------------------
# stepping


def _step_arrays(u, v, d_vals, w, b, c, m_bar, dt):
    # overflow shows up as inf and is reported by the caller
    with np.errstate(over="ignore", invalid="ignore"):
        return _heun(u, v, d_vals, w, b, c, m_bar, dt)


def _heun(u, v, d_vals, w, b, c, m_bar, dt):
    r1 = w @ u
    r2 = w @ v
    gu = r1 + b * r2
    gv = c * r1 + r2
    # predictor: frozen start-of-step masses
    up = u * np.exp(dt * (d_vals - gu))
    vp = v * np.exp(dt * (m_bar - gv))
    r1p = w @ up
    r2p = w @ vp
    if not (math.isfinite(r1p) and math.isfinite(r2p)):
        # predictor overflow: the corrector would silently flush to zero
        return np.full_like(u, np.nan), np.full_like(v, np.nan)
    gu = 0.5 * (gu + r1p + b * r2p)
    gv = 0.5 * (gv + c * r1p + r2p)
    return u * np.exp(dt * (d_vals - gu)), v * np.exp(dt * (m_bar - gv))


def step(state: PopulationState, params: ModelParams, dt: float) -> PopulationState:
    """Advance ``state`` by ``dt`` with the exponential Heun update."""
    grid = state.grid
    u, v = _step_arrays(
        state.u, state.v, params.d.sample(grid), grid.weights, params.b, params.c, params.m_bar, dt
    )
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise SimulationError(
            f"non-finite density at t={state.t + dt}", {"t": state.t, "u": state.u, "v": state.v}
        )
    return PopulationState(grid, u, v, state.t + dt)


def semi_explicit_reconstruct(
    u0,
    d_values,
    times,
    r1_series,
    r2_series,
    t: float,
    b: float,
    max_gap: float | None = None,
) -> np.ndarray:
    """``u0(x) exp(int_0^t (d(x) - r1 - b r2) ds)`` with the time integral by trapezoid.

    ``times`` must start at 0 and cover ``t``.  When ``max_gap`` is given, any
    spacing of the recorded series larger than it is rejected.
    """
    u0 = np.asarray(u0, dtype=float)
    d_values = np.asarray(d_values, dtype=float)
    times = np.asarray(times, dtype=float)
    g = np.asarray(r1_series, dtype=float) + b * np.asarray(r2_series, dtype=float)
    if t == 0:
        return u0.copy()
    if times.size < 2 or times[0] != 0 or times[-1] < t * (1 - 1e-12):
        raise ValidationError("recorded series must start at 0 and cover [0, t]")
    gaps = np.diff(times)
    if max_gap is not None and gaps.max() > max_gap * (1 + 1e-9):
        raise ValidationError(f"series gap {gaps.max():.3g} exceeds {max_gap:.3g}")
    keep = times <= t * (1 + 1e-12)
    tt, gg = times[keep], g[keep]
    if tt[-1] < t:
        tt = np.append(tt, t)
        gg = np.append(gg, np.interp(t, times, g))
    integral = float(np.sum(0.5 * (gg[1:] + gg[:-1]) * np.diff(tt)))
    return u0 * np.exp(t * d_values - integral)


# ---------------------------------------------------------------------------
# diagnostics from the convergence proof


def lyapunov_P(r1: float, r2: float, params: ModelParams) -> float:
    if r1 <= 0:
        raise ValidationError("P(r1, r2) needs r1 > 0")
    b, c, mb = params.b, params.c, params.m_bar
    return (c * r1 * r1 + 2 * b * c * r1 * r2 + b * (r2 - mb) ** 2) / (2 * c * r1)


def lyapunov_value(state: PopulationState, params: ModelParams) -> float:
    """``int (d(x) - P(r1, r2)) u dx``; nondecreasing along exact trajectories."""
    grid = state.grid
    r1, r2 = state.r1, state.r2
    d_vals = params.d.sample(grid)
    return quadrature(grid, d_vals * state.u) - lyapunov_P(r1, r2, params) * r1


def entropy_residuals(state: PopulationState, params: ModelParams) -> tuple[float, float]:
    grid = state.grid
    r1, r2 = state.r1, state.r2
    fit = params.d.sample(grid) - r1 - params.b * r2
    I1 = quadrature(grid, fit * fit * state.u)
    I2 = r2 * (params.c * r1 + r2 - params.m_bar) ** 2
    return I1, I2


# ---------------------------------------------------------------------------
# long-time prediction


class OdeOutcome(str, enum.Enum):
    COEXIST = "Coexist"
    U_WINS = "UWins"
    V_WINS = "VWins"
    CONTINUUM = "Continuum"
    BISTABLE_INIT_DEPENDENT = "BistableInitDependent"


@dataclass(frozen=True)
class OdePrediction:
    """Predicted limit; ``r1_star``/``r2_star`` are NaN where no value is predicted."""

    outcome: OdeOutcome
    r1_star: float
    r2_star: float
    xbar: float
    d_M: float
    bistable: bool = False
    separatrix_gap: float = float("nan")  # r2(0) - h(r1(0)) in the bistable regime


def fitness_peak(params: ModelParams, grid: TraitGrid, u0) -> tuple[float, float, int]:
    """``(d_M, xbar, index)`` over the support of ``u0``; rejects non-unique maxima."""
    d_vals = params.d.sample(grid)
    dM, idx, unique = peak_of(d_vals, support_mask(u0))
    if idx < 0:
        raise ValidationError("u0 has empty support")
    if not unique:
        raise ValidationError("max of d over supp u0 is attained at more than one node")
    return dM, float(grid.nodes[idx]), idx


def ode_lv_params(params: ModelParams, d_M: float) -> LVParams:
    return LVParams(d_bar=d_M, m_bar=params.m_bar, b=params.b, c=params.c)


def build_ode_separatrix(params: ModelParams, grid: TraitGrid, u0, **kwargs) -> SeparatrixCurve:
    dM, _, _ = fitness_peak(params, grid, u0)
    return global_separatrix(ode_lv_params(params, dM), **kwargs)


def predict_ode_outcome(
    params: ModelParams,
    grid: TraitGrid,
    u0,
    v0,
    separatrix: SeparatrixCurve | None = None,
) -> OdePrediction:
    """Long-time limit of the masses from the fitness peak ``d_M`` and the coefficients."""
    dM, xbar, _ = fitness_peak(params, grid, u0)
    b, c, mb = params.b, params.c, params.m_bar
    nan = float("nan")

    def close(a, b_):
        return abs(a - b_) <= EQ_RTOL * max(abs(a), abs(b_))

    if close(b * c, 1.0) and close(b * mb, dM):
        return OdePrediction(OdeOutcome.CONTINUUM, nan, nan, xbar, dM)
    if close(c * dM, mb) or close(b * mb, dM):
        raise ValidationError("boundary case c = m_bar/d_M or b = d_M/m_bar is not covered")
    c_small = c * dM < mb
    b_small = b * mb < dM
    if c_small and b_small:
        r1s = (dM - b * mb) / (1 - b * c)
        return OdePrediction(OdeOutcome.COEXIST, r1s, mb - c * r1s, xbar, dM)
    if b_small:
        return OdePrediction(OdeOutcome.U_WINS, dM, 0.0, xbar, dM)
    if c_small:
        return OdePrediction(OdeOutcome.V_WINS, 0.0, mb, xbar, dM)

    if separatrix is None:
        raise ValidationError(
            "bistable regime: supply the separatrix of the LV system with d_bar = d_M "
            "(see build_ode_separatrix)"
        )
    if not math.isclose(separatrix.params.d_bar, dM, rel_tol=1e-12):
        raise ValidationError("separatrix was built for a different d_bar than d_M")
    r1_0, r2_0 = quadrature(grid, u0), quadrature(grid, v0)
    gap = r2_0 - float(separatrix.h(r1_0))
    basin = basin_query(separatrix, r1_0, r2_0)
    if basin is Basin.P_WINS:
        return OdePrediction(OdeOutcome.U_WINS, dM, 0.0, xbar, dM, True, gap)
    if basin is Basin.X_WINS:
        return OdePrediction(OdeOutcome.V_WINS, 0.0, mb, xbar, dM, True, gap)
    return OdePrediction(OdeOutcome.BISTABLE_INIT_DEPENDENT, nan, nan, xbar, dM, True, gap)


# ---------------------------------------------------------------------------
# driver


def run_ode_sim(
    params: ModelParams,
    grid: TraitGrid,
    u0,
    v0,
    config: OdeSimConfig,
    record_state=None,
) -> tuple[PopulationState, OdeDiagnostics]:
    """Integrate to ``config.t_end``, recording diagnostics every ``record_every`` steps.

    ``record_state``, if given, is called as ``record_state(t, u, v)`` at every
    recorded step.  The run aborts when a mass exceeds ten times its a-priori
    bound ``max(d_M, r(0))``.
    """
    state = PopulationState(grid, u0, v0, 0.0)
    d_vals = params.d.sample(grid)
    w = grid.weights
    b, c, mb = params.b, params.c, params.m_bar
    dM, xbar, _ = fitness_peak(params, grid, state.u)
    eps = config.eps_conc if config.eps_conc is not None else 3 * grid.spacing
    bound1 = 10 * max(dM, state.r1)
    bound2 = 10 * max(mb, state.r2)

    diag = OdeDiagnostics()
    u, v = state.u, state.v

    def record(t):
        st = PopulationState(grid, u, v, t)
        r1, r2 = st.r1, st.r2
        L = lyapunov_value(st, params) if r1 > 0 else float("nan")
        I1, I2 = entropy_residuals(st, params)
        m = concentration_metrics(grid, u, xbar, eps)
        diag.append(
            t=t, r1=r1, r2=r2, lyapunov=L, I1=I1, I2=I2,
            conc_frac=m.mass_fraction_near_peak, argmax_u=m.peak_location,
        )
        if record_state is not None:
            record_state(t, u, v)

    record(0.0)
    n = config.n_steps
    for i in range(1, n + 1):
        u, v = _step_arrays(u, v, d_vals, w, b, c, mb, config.dt)
        if i % config.record_every == 0 or i == n:
            t = i * config.dt
            r1, r2 = w @ u, w @ v
            if not (math.isfinite(r1) and math.isfinite(r2)):
                raise SimulationError(f"non-finite density at t={t}", {"t": t, "u": u, "v": v})
            if r1 > bound1 or r2 > bound2:
                raise SimulationError(
                    f"mass blow-up at t={t}: r1={r1:.6g}, r2={r2:.6g} exceed 10x a-priori bounds",
                    {"t": t, "u": u, "v": v},
                )
            record(t)
    final = PopulationState(grid, u, v, n * config.dt)
    diag.final_metrics = concentration_metrics(grid, u, xbar, eps)
    return final, diag
