import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import eigh_tridiagonal, solve_banded

from phenolv.model import Constant, GaussianBump, TwoPeaks, ValidationError, make_grid, quadrature
from phenolv.spectral import (
    Tridiagonal,
    count_below,
    dense_principal_shift,
    operator_residual,
    principal_shift,
    schrodinger_operator,
)


def test_constant_q_matches_discrete_and_continuum_eigenvalues():
    grid = make_grid(-5, 5, 201)
    L, h = 10.0, grid.spacing
    s, phi = principal_shift(Constant(1.5), grid)
    discrete = 1.5 - (4 / h ** 2) * math.sin(math.pi * h / (2 * L)) ** 2
    assert s == pytest.approx(discrete, abs=1e-10)
    assert abs(s - (1.5 - (math.pi / L) ** 2)) < 1e-5
    # eigenfunction is the first sine mode
    mode = np.sin(math.pi * (grid.nodes + 5) / L)
    mode /= quadrature(grid, mode)
    assert np.abs(phi - mode).max() < 1e-8


def test_eigenfunction_properties():
    grid = make_grid(-30, 30, 601)
    q = GaussianBump(2, 1, 0, 1)
    s, phi = principal_shift(q, grid)
    assert phi[0] == 0.0 and phi[-1] == 0.0
    assert np.all(phi[1:-1] > 0)
    assert quadrature(grid, phi) == pytest.approx(1.0, rel=1e-13)
    assert operator_residual(q.sample(grid), grid, s, phi) <= 1e-8 * phi.max()
    # principal shift lies between the extremes of q
    assert 2.0 < s < 3.0


@settings(max_examples=40, deadline=None)
@given(
    st.floats(0.1, 3), st.floats(0.01, 3), st.floats(-3, 3), st.floats(0.3, 2.5),
    st.integers(41, 301),
)
def test_against_tridiagonal_eigensolver(base, amp, centre, width, n):
    grid = make_grid(-8, 8, n)
    q = GaussianBump(base, amp, centre, width).sample(grid)
    diag, off = schrodinger_operator(q, grid)
    lam = eigh_tridiagonal(diag, np.full(diag.size - 1, off), eigvals_only=True, select="i", select_range=(0, 0))
    s, _ = principal_shift(q, grid)
    assert abs(s + lam[0]) <= 1e-8 * max(1.0, abs(lam[0]))


def test_against_dense_oracle_two_peaks():
    grid = make_grid(-10, 10, 401)
    q = TwoPeaks(1, 2, -2, 0.7, 1.5, 3, 1.0)
    s, _ = principal_shift(q, grid)
    assert s == pytest.approx(dense_principal_shift(q, grid), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5))
def test_shift_identity(delta):
    # adding a constant to q moves the principal shift by the same constant
    grid = make_grid(-6, 6, 121)
    q = GaussianBump(1, 2, 0.5, 1).sample(grid)
    s0, phi0 = principal_shift(q, grid)
    s1, phi1 = principal_shift(q + delta, grid)
    assert s1 - s0 == pytest.approx(delta, abs=1e-9)
    assert np.abs(phi1 - phi0).max() <= 1e-7 * phi0.max()


def test_shift_is_monotone_in_q():
    grid = make_grid(-6, 6, 121)
    q = GaussianBump(1, 2, 0.5, 1).sample(grid)
    bump = GaussianBump(0, 0.3, -1, 0.5).sample(grid)
    assert principal_shift(q + bump, grid)[0] > principal_shift(q, grid)[0]


def test_count_below_matches_eigvalsh():
    rng = np.random.default_rng(3)
    diag = rng.uniform(-2, 2, 50)
    off = -0.7
    ev = eigh_tridiagonal(diag, np.full(49, off), eigvals_only=True)
    for sigma in np.linspace(-3, 3, 25):
        assert count_below(diag, off, sigma) == int(np.sum(ev < sigma))


def test_tridiagonal_solver_against_banded():
    rng = np.random.default_rng(5)
    n = 40
    lo, d, up = rng.normal(size=n - 1), rng.normal(size=n) + 4, rng.normal(size=n - 1)
    rhs = rng.normal(size=n)
    ab = np.zeros((3, n))
    ab[0, 1:], ab[1], ab[2, :-1] = up, d, lo
    assert np.allclose(Tridiagonal(lo, d, up).solve(rhs), solve_banded((1, 1), ab, rhs), rtol=1e-12, atol=1e-12)


def test_bad_input_rejected():
    grid = make_grid(0, 1, 11)
    with pytest.raises(ValidationError):
        principal_shift(np.ones(10), grid)
    with pytest.raises(ValidationError):
        principal_shift(np.full(11, np.nan), grid)
