import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from phenolv.model import (
    Constant,
    CosineBump,
    GaussianBump,
    ModelParams,
    PopulationState,
    SimulationError,
    TwoPeaks,
    ValidationError,
    concentration_metrics,
    make_grid,
    quadrature,
    resource_from_dict,
    validate_assumptions,
)

finite = st.floats(-50, 50, allow_nan=False)


def test_three_node_grid():
    g = make_grid(-1, 1, 3)
    assert np.array_equal(g.nodes, [-1.0, 0.0, 1.0])
    assert np.array_equal(g.weights, [0.5, 1.0, 0.5])


def test_weight_sum_and_spacing():
    g = make_grid(0, 10, 11)
    assert g.spacing == 1.0
    assert g.weights.sum() == pytest.approx(10.0, abs=1e-14)
    assert make_grid(-20, 20, 4001).spacing == pytest.approx(0.01, rel=1e-14)


@pytest.mark.parametrize("args", [(-1, 1, 2), (1, 1, 5), (2, -2, 5), (0, 1, 3.5), (0, math.inf, 5)])
def test_bad_grids_rejected(args):
    with pytest.raises(ValidationError):
        make_grid(*args)


def test_grid_arrays_are_read_only():
    g = make_grid(0, 1, 5)
    with pytest.raises(ValueError):
        g.nodes[0] = 3.0


def test_quadrature_examples():
    g = make_grid(-1, 1, 101)
    assert quadrature(g, np.ones(101)) == pytest.approx(2.0, abs=1e-14)
    assert abs(quadrature(g, g.nodes)) < 1e-14


def test_gaussian_integral_against_adaptive_quadrature():
    g = make_grid(-20, 20, 4001)
    oracle, _ = quad(lambda x: math.exp(-x * x), -20, 20, epsabs=1e-13, epsrel=1e-12, limit=200)
    assert abs(oracle - math.sqrt(math.pi)) < 1e-12
    assert abs(quadrature(g, np.exp(-g.nodes ** 2)) - oracle) < 1e-8


def test_quadrature_length_mismatch():
    with pytest.raises(ValidationError):
        quadrature(make_grid(0, 1, 5), np.ones(4))


@given(lo=finite, width=st.floats(0.1, 40), n=st.integers(3, 400), a=finite, b=finite)
def test_trapezoid_exact_for_affine(lo, width, n, a, b):
    g = make_grid(lo, lo + width, n)
    hi = lo + width
    exact = a * width + 0.5 * b * (hi * hi - lo * lo)
    got = quadrature(g, a + b * g.nodes)
    scale = abs(a) * width + abs(b) * 0.5 * (hi * hi + lo * lo) + 1e-300
    assert abs(got - exact) <= 1e-13 * scale * max(1.0, n / 100)


resources = st.one_of(
    st.builds(Constant, st.floats(0.1, 5)),
    st.builds(GaussianBump, st.floats(0.1, 3), st.floats(0.01, 3), st.floats(-5, 5), st.floats(0.2, 3)),
    st.builds(CosineBump, st.floats(0.1, 3), st.floats(0.01, 3), st.floats(-5, 5), st.floats(0.2, 3)),
    st.builds(
        TwoPeaks, st.floats(0.1, 3), st.floats(0.01, 3), st.floats(-5, 0), st.floats(0.2, 2),
        st.floats(0.01, 3), st.floats(0.5, 5), st.floats(0.2, 2),
    ),
)


@given(resources)
def test_resources_bounded_positive(res):
    g = make_grid(-10, 10, 201)
    vals = res.sample(g)
    assert np.all(np.isfinite(vals))
    assert vals.min() > 0
    assert resource_from_dict(res.to_dict()) == res


@given(center=st.floats(-8, 8), width=st.floats(0.3, 3), amp=st.floats(0.1, 3))
def test_gaussian_grid_argmax_is_nearest_node(center, width, amp):
    g = make_grid(-10, 10, 201)
    vals = GaussianBump(1.0, amp, center, width).sample(g)
    k = g.nearest_index(center)
    # exact midpoint ties are excluded by checking the distance gap
    dist = np.abs(g.nodes - center)
    if np.sort(dist)[1] - dist[k] > 1e-9:
        assert int(np.argmax(vals)) == k


def test_resource_registry_errors():
    with pytest.raises(ValidationError, match="unknown resource family"):
        resource_from_dict({"family": "spline"})
    with pytest.raises(ValidationError, match="missing"):
        resource_from_dict({"family": "gaussian", "base": 1})
    with pytest.raises(ValidationError, match="unknown key"):
        resource_from_dict({"family": "constant", "level": 1, "slope": 2})
    with pytest.raises(ValidationError):
        GaussianBump(1, 1, 0, 0)


def test_model_params_validation():
    with pytest.raises(ValidationError, match=r"params\.b must be > 0"):
        ModelParams(b=-1, c=0.5, m_bar=1, d=Constant(1))
    with pytest.raises(ValidationError, match=r"params\.m_bar"):
        ModelParams(b=1, c=0.5, m_bar=0, d=Constant(1))


def test_population_state_masses_follow_mutation():
    g = make_grid(-1, 1, 11)
    s = PopulationState(g, np.ones(11), np.zeros(11))
    assert s.r1 == quadrature(g, s.u)
    s.u[3] = 7.0
    assert s.r1 == quadrature(g, s.u)
    c = s.copy()
    c.u[0] = 100.0
    assert s.u[0] == 1.0


def test_population_state_negativity():
    g = make_grid(-1, 1, 5)
    s = PopulationState(g, np.array([0, -1e-13, 1, 1, 0]), np.zeros(5))
    assert s.u.min() == 0.0
    with pytest.raises(SimulationError):
        PopulationState(g, np.array([0, -1e-9, 1, 1, 0]), np.zeros(5))
    with pytest.raises(SimulationError):
        PopulationState(g, np.array([0, np.nan, 1, 1, 0]), np.zeros(5))
    with pytest.raises(ValidationError):
        PopulationState(g, np.zeros(4), np.zeros(5))


@settings(max_examples=50)
@given(st.lists(st.floats(0, 10), min_size=11, max_size=11), st.floats(-1, 1), st.floats(0.01, 2))
def test_concentration_metric_ranges(vals, ref, eps):
    g = make_grid(-1, 1, 11)
    m = concentration_metrics(g, np.array(vals), ref, eps)
    assert 0.0 <= m.mass_fraction_near_peak <= 1.0
    assert m.half_mass_width >= 0.0


def test_concentration_of_single_cell():
    g = make_grid(-1, 1, 21)
    u = np.zeros(21)
    u[10] = 5.0
    m = concentration_metrics(g, u, 0.0, 0.1)
    assert m.peak_location == 0.0
    assert m.mass_fraction_near_peak == 1.0
    assert m.half_mass_width == 0.0


def _coexistence(b=0.5, c=0.25):
    return ModelParams(b=b, c=c, m_bar=1.0, d=GaussianBump(2, 1, 0, 1))


def test_assumptions_zero_initial_mass():
    g = make_grid(-10, 10, 101)
    rep = validate_assumptions(_coexistence(), g, np.zeros(101), np.ones(101))
    assert not rep.initial_masses_positive
    assert not rep.mandatory_ok


def test_assumptions_limit_pair():
    g = make_grid(-10, 10, 101)
    u0 = np.exp(-g.nodes ** 2)
    rep = validate_assumptions(_coexistence(), g, u0, u0)
    # d_M - b m = 5/2 over 1 - bc = 7/8
    assert rep.r1_star == pytest.approx(20 / 7, rel=1e-12)
    assert rep.r2_star == pytest.approx(2 / 7, rel=1e-12)
    assert rep.limit_pair_positive and rep.tail_negative and rep.all_ok
    assert rep.xbar == 0.0


def test_assumptions_singular_pair():
    g = make_grid(-10, 10, 101)
    u0 = np.exp(-g.nodes ** 2)
    rep = validate_assumptions(_coexistence(b=2, c=0.5), g, u0, u0)
    assert not rep.limit_pair_positive
    assert any("singular" in m for m in rep.messages)


def test_assumptions_peak_over_support():
    # u0 vanishes near the global peak of d: the relevant peak moves to the support edge
    g = make_grid(-10, 10, 101)
    u0 = np.where(g.nodes >= 2.0, 1.0, 0.0)
    rep = validate_assumptions(_coexistence(), g, u0, u0)
    assert rep.xbar == 2.0
    assert rep.r1_star < 20 / 7
