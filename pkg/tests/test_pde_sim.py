import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import simpson

from phenolv.model import (
    Constant,
    GaussianBump,
    ModelParams,
    PopulationState,
    SimulationError,
    ValidationError,
    make_grid,
    quadrature,
)
from phenolv.pde_sim import (
    CrankNicolson,
    InadmissibleSteadyState,
    PdeOutcome,
    PdeSimConfig,
    PdeStepper,
    _clip_negatives,
    imex_step,
    predict_pde_outcome,
    profile_distance,
    projection_constants,
    reduced_wz,
    run_linear_companion,
    run_pde_sim,
    solve_mass_system,
    steady_state,
)
from phenolv.spectral import operator_residual

D = GaussianBump(2, 1, 0, 1)
M = GaussianBump(2, 1.2, 0.5, 1)


def params(b=0.5, c=0.25, d=D, m=M):
    return ModelParams(b=b, c=c, m_bar=1.0, d=d, m=m)


@pytest.fixture(scope="module")
def grid():
    return make_grid(-15, 15, 151)


def initial(grid, v_amp=0.3):
    x = grid.nodes
    u0 = 0.5 * np.exp(-x ** 2 / 8)
    v0 = v_amp * np.exp(-(x - 1) ** 2 / 2)
    u0[0] = u0[-1] = v0[0] = v0[-1] = 0.0
    return u0, v0


def test_mass_system_examples():
    assert solve_mass_system(2.0, 3.0, 0.0, 0.0) == (2.0, 3.0)
    r1, r2 = solve_mass_system(3.0, 1.0, 0.5, 0.25)
    assert (r1, r2) == pytest.approx((20 / 7, 2 / 7), rel=1e-14)
    with pytest.raises(ValidationError, match="singular"):
        solve_mass_system(1.0, 1.0, 2.0, 0.5)


@settings(max_examples=50)
@given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0, 3), st.floats(0, 3))
def test_mass_system_solves_equations(s1, s2, b, c):
    if abs(1 - b * c) < 1e-3:
        return
    r1, r2 = solve_mass_system(s1, s2, b, c)
    scale = (s1 + s2) / abs(1 - b * c)
    assert abs(r1 + b * r2 - s1) <= 1e-12 * scale * (1 + b)
    assert abs(c * r1 + r2 - s2) <= 1e-12 * scale * (1 + c)


def test_steady_state_profiles(grid):
    p = params()
    ss = steady_state(p, grid)
    assert ss.r1_bar > 0 and ss.r2_bar > 0
    assert quadrature(grid, ss.u_bar) == pytest.approx(ss.r1_bar, rel=1e-13)
    assert quadrature(grid, ss.v_bar) == pytest.approx(ss.r2_bar, rel=1e-13)
    assert ss.r1_bar + p.b * ss.r2_bar == pytest.approx(ss.s1, rel=1e-13)
    assert p.c * ss.r1_bar + ss.r2_bar == pytest.approx(ss.s2, rel=1e-13)
    assert operator_residual(D.sample(grid), grid, ss.s1, ss.u_bar) < 1e-8 * ss.u_bar.max()
    assert operator_residual(M.sample(grid), grid, ss.s2, ss.v_bar) < 1e-8 * ss.v_bar.max()
    assert math.isnan(ss.K1)


def test_steady_state_constant_rates():
    grid = make_grid(-10, 10, 201)
    h, L = grid.spacing, 20.0
    lam = (4 / h ** 2) * math.sin(math.pi * h / (2 * L)) ** 2
    ss = steady_state(params(d=Constant(3.0), m=Constant(2.0)), grid)
    assert ss.s1 == pytest.approx(3.0 - lam, abs=1e-10)
    assert ss.s2 == pytest.approx(2.0 - lam, abs=1e-10)


def test_steady_state_rejections(grid):
    with pytest.raises(ValidationError, match="bc = 1"):
        steady_state(params(b=2, c=0.5), grid)
    with pytest.raises(InadmissibleSteadyState) as info:
        steady_state(params(b=0.1, c=0.9, d=Constant(3.0), m=Constant(1.0)), grid)
    assert info.value.r2_bar <= 0


def test_projection_constants(grid):
    ss = steady_state(params(), grid)
    assert projection_constants(ss, 2 * ss.u_bar, 0.5 * ss.v_bar, grid) == pytest.approx((2.0, 0.5), rel=1e-14)
    u0, v0 = initial(grid)
    K1, K2 = projection_constants(ss, u0, v0, grid)
    x = grid.nodes
    oracle1 = simpson(ss.u_bar * u0, x=x) / simpson(ss.u_bar ** 2, x=x)
    oracle2 = simpson(ss.v_bar * v0, x=x) / simpson(ss.v_bar ** 2, x=x)
    assert K1 == pytest.approx(oracle1, rel=1e-3)
    assert K2 == pytest.approx(oracle2, rel=1e-3)
    assert steady_state(params(), grid, u0, v0).K1 == K1


def test_crank_nicolson_on_discrete_sine_mode():
    grid = make_grid(0, math.pi, 101)
    h, dt, q0 = grid.spacing, 0.05, 0.3
    cn = CrankNicolson(np.full(grid.n, q0), grid, dt)
    mode = np.sin(grid.nodes)
    mode[0] = mode[-1] = 0.0
    lam = q0 - (4 / h ** 2) * math.sin(h / 2) ** 2
    factor = (1 + 0.5 * dt * lam) / (1 - 0.5 * dt * lam)
    out = cn(mode)
    assert out[0] == 0.0 and out[-1] == 0.0
    assert np.abs(out - factor * mode).max() < 1e-13


def test_zero_state_is_fixed(grid):
    s = PopulationState(grid, np.zeros(grid.n), np.zeros(grid.n))
    out = imex_step(s, params(), grid, 0.1)
    assert np.all(out.u == 0) and np.all(out.v == 0)


def test_steady_state_is_discrete_fixed_point(grid):
    p = params()
    ss = steady_state(p, grid)
    stepper = PdeStepper(p, grid, 0.05, (ss.s1, ss.s2))
    u, v = ss.u_bar, ss.v_bar
    for _ in range(100):
        u, v, _, _ = stepper.step(u, v)
    # exact up to the eigenvector residual accumulated over the steps
    assert profile_distance(u, ss.u_bar) < 1e-9
    assert profile_distance(v, ss.v_bar) < 1e-9


def test_nonlocal_solution_is_scalar_multiple_of_linear_companion(grid):
    p = params(b=2, c=2)
    stepper = PdeStepper(p, grid, 0.05)
    u, v = initial(grid)
    ul, vl = u.copy(), v.copy()
    for _ in range(200):
        u, v, _, _ = stepper.step(u, v)
        ul, vl = stepper.linear(ul, vl)
    inner = slice(1, -1)
    ratio_u = u[inner] / ul[inner]
    ratio_v = v[inner] / vl[inner]
    assert np.ptp(ratio_u) <= 1e-12 * ratio_u.max()
    assert np.ptp(ratio_v) <= 1e-12 * ratio_v.max()


def test_second_order_in_time(grid):
    p = params()
    u0, v0 = initial(grid)

    def final_r1(dt):
        final, _ = run_pde_sim(p, grid, u0, v0, PdeSimConfig(2.0, dt, 1000))
        return final.r1

    ref = final_r1(0.0025)
    e1, e2 = abs(final_r1(0.04) - ref), abs(final_r1(0.02) - ref)
    assert math.log2(e1 / e2) >= 1.9


def test_positivity_and_clipping():
    a = np.array([1.0, -1e-14, 0.5])
    assert _clip_negatives(a, "u", 0.0).min() == 0.0
    with pytest.raises(SimulationError):
        _clip_negatives(np.array([1.0, -1e-6]), "u", 0.0)


def test_coexistence_run_converges(grid):
    p = params()
    u0, v0 = initial(grid)
    final, diag = run_pde_sim(p, grid, u0, v0, PdeSimConfig(150.0, 0.05, 100))
    pr = diag.prediction
    assert pr.outcome is PdeOutcome.COEXIST
    assert diag.dist_u[-1] < 1e-6 and diag.dist_v[-1] < 1e-6
    assert final.r1 == pytest.approx(pr.r1_limit, rel=1e-6)
    assert np.all(np.isfinite(diag.array("r2")))


@pytest.mark.parametrize("v_amp", [0.05, 2.0])
def test_exclusion_prediction_matches_run(grid, v_amp):
    p = params(b=2, c=2)
    u0, v0 = initial(grid, v_amp)
    pr = predict_pde_outcome(p, grid, u0, v0)
    assert pr.outcome in (PdeOutcome.U_WINS, PdeOutcome.V_WINS)
    assert (pr.separatrix_gap < 0) == (pr.outcome is PdeOutcome.U_WINS)
    final, _ = run_pde_sim(p, grid, u0, v0, PdeSimConfig(150.0, 0.05, 100), prediction=pr)
    if pr.outcome is PdeOutcome.U_WINS:
        assert final.r2 < 1e-4 and profile_distance(final.u, pr.u_limit) < 1e-2
        assert pr.r1_limit == pr.steady.s1
    else:
        assert final.r1 < 1e-4 and profile_distance(final.v, pr.v_limit) < 1e-2
        assert pr.r2_limit == pr.steady.s2


def test_inadmissible_steady_state_gives_nan_distances(grid):
    p = params(b=0.1, c=0.9, d=Constant(3.0), m=Constant(1.0))
    u0, v0 = initial(grid)
    _, diag = run_pde_sim(p, grid, u0, v0, PdeSimConfig(1.0, 0.05, 5))
    assert diag.prediction is None and math.isnan(diag.dist_u[-1])


def test_linear_companion_conserves_projection(grid):
    p = params(b=2, c=2)
    ss = steady_state(p, grid)
    u0, v0 = initial(grid)
    run = run_linear_companion(p, grid, ss, u0, v0, PdeSimConfig(50.0, 0.05, 20))
    assert run.conservation_drift() < 1e-8
    K1, K2 = projection_constants(ss, u0, v0, grid)
    # the companion converges to K * (steady profile)
    assert run.lambda1[-1] == pytest.approx(K1 * ss.r1_bar, rel=1e-3)
    assert run.lambda2[-1] == pytest.approx(K2 * ss.r2_bar, rel=1e-3)


def test_wz_frozen_limits(grid):
    p = params()
    u0, v0 = initial(grid)
    ss = steady_state(p, grid, u0, v0)
    l1, l2 = ss.K1 * ss.r1_bar, ss.K2 * ss.r2_bar
    sol = reduced_wz(l1, l2, p, ss, 200.0)
    assert sol.w[-1] == pytest.approx(1 / ss.K1, rel=1e-6)
    assert sol.z[-1] == pytest.approx(1 / ss.K2, rel=1e-6)
    # callable and tabulated series give the same answer
    tab = reduced_wz(([0, 300], [l1, l1]), lambda t: l2, p, ss, 200.0)
    assert np.allclose(tab.w, sol.w, rtol=1e-8)


def test_wz_exclusion_limit(grid):
    p = params(b=2, c=2)
    ss = steady_state(p, grid)
    sol = reduced_wz(ss.r1_bar, ss.r2_bar, p, ss, 200.0, w0=1.5, z0=0.5)
    s1 = ss.r1_bar + p.b * ss.r2_bar
    assert sol.w[-1] == pytest.approx(s1 / ss.r1_bar, rel=1e-6)
    assert abs(sol.z[-1]) < 1e-6


@pytest.mark.parametrize("kw", [dict(t_end=1, dt=0), dict(t_end=0.001, dt=0.01), dict(t_end=1, record_every=1.5)])
def test_sim_config_validation(kw):
    with pytest.raises(ValidationError):
        PdeSimConfig(**kw)
