from __future__ import annotations

import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma

from fraccont.errors import (
    AlphaOutOfRange,
    BadOrdering,
    BetaOutOfRange,
    GridMismatch,
    LengthMismatch,
    NegativeS,
    NonPositiveLength,
    ValidationError,
)
from fraccont.fracgrid import TimeGrid
from fraccont.mlf import mittag_leffler
from fraccont.specdiff import (
    ModeTrajectory,
    ModeVector,
    SpectralOperator,
    dirichlet_laplacian_1d,
    forced_exponent,
    hs_norm,
    hs_tail,
    l2_time_norm,
    predicted_exponent,
    solve_forced,
    solve_homogeneous,
)

# frozen from the extended-precision oracles in tests/oracles.py
E_HALF_M1 = 0.427583576155807004  # E_{1/2,1}(-1)
FORCED_LAM2 = 0.372302161844747128  # (1 - E_{1/2,1}(-2)) / 2
HEAT_PI2_01 = 0.372707838853437893  # exp(-pi^2 / 10)


# {{{ operators and mode vectors

def test_dirichlet_spectrum():
    op = dirichlet_laplacian_1d(math.pi, 5)
    assert np.allclose(op.lambdas, [1, 4, 9, 16, 25])
    assert np.allclose(dirichlet_laplacian_1d(2.0, 3).lambdas, (np.arange(1, 4) * math.pi / 2) ** 2)
    assert np.allclose(op.power(0.5), [1, 2, 3, 4, 5])


def test_operator_checks():
    with pytest.raises(ValidationError):
        SpectralOperator(np.array([1.0, -1.0]))
    with pytest.raises(BadOrdering):
        SpectralOperator(np.array([2.0, 1.0]))
    with pytest.raises(NonPositiveLength):
        dirichlet_laplacian_1d(0.0)
    with pytest.raises(ValidationError):
        dirichlet_laplacian_1d(1.0, 0)


def test_hs_norm_and_tail():
    op = dirichlet_laplacian_1d(math.pi, 100)
    v = ModeVector.power_decay(100, 2.0)
    # sum_{p<=100} p^(4s) p^-4 with s = 0.5 is sum p^-2
    assert hs_norm(v, op, 0.5) == pytest.approx(math.sqrt(np.sum(np.arange(1, 101.0) ** -2)))
    tail = hs_tail(lambda p: p**-2.0, math.pi, 100, 0.5, terms=10**6)
    full = math.sqrt(math.pi**2 / 6)
    assert hs_norm(v, op, 0.5) ** 2 + tail**2 == pytest.approx(full**2, rel=1e-6)
    with pytest.raises(NegativeS):
        hs_norm(v, op, -0.1)
    with pytest.raises(LengthMismatch):
        hs_norm(ModeVector.unit(3), op, 0.0)


def test_unit_vector():
    assert ModeVector.unit(4, 2).coeffs.tolist() == [0, 1, 0, 0]
    with pytest.raises(ValidationError):
        ModeVector(np.array([1.0, np.inf]))


# }}}


# {{{ homogeneous problem

def test_heat_equation_limit():
    op = dirichlet_laplacian_1d(1.0, 4)
    g = TimeGrid.uniform(0.1, 4)
    v = solve_homogeneous(ModeVector.unit(4), op, 1.0, 1.0, g)
    assert v.frames[-1, 0] == pytest.approx(HEAT_PI2_01, rel=1e-13)
    assert np.all(v.frames[:, 1:] == 0.0)


def test_half_order_first_mode():
    op = dirichlet_laplacian_1d(math.pi, 8)
    v = solve_homogeneous(ModeVector.unit(8), op, 0.5, 1.0, TimeGrid.uniform(1.0, 10))
    assert v.frames[-1, 0] == pytest.approx(E_HALF_M1, rel=1e-13)


def test_norms_do_not_grow():
    op = dirichlet_laplacian_1d(math.pi, 32)
    v = solve_homogeneous(ModeVector.power_decay(32, 1.5), op, 0.4, 0.8, TimeGrid.uniform(2.0, 50))
    for s in (0.0, 0.5, 1.0):
        n = v.hs_norms(op, s)
        assert np.all(np.diff(n) <= 1e-15)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 1.0), st.floats(0.3, 1.5), st.floats(0.01, 5.0), st.floats(0.0, 1.0))
def test_smoothing_estimate(alpha, beta, T, s):
    # lambda^beta E_{a,1}(-lambda^beta t^a) <= Gamma(1 + a) t^-a
    op = dirichlet_laplacian_1d(math.pi, 40)
    theta = ModeVector.power_decay(40, 2 * s + 0.6)
    v = solve_homogeneous(theta, op, alpha, beta, TimeGrid.uniform(T, 4))
    lhs = T**alpha * v.hs_norms(op, s + beta)[-1]
    assert lhs <= gamma(1 + alpha) * hs_norm(theta, op, s) * (1 + 1e-10)


def test_order_checks():
    op = dirichlet_laplacian_1d(math.pi, 4)
    g = TimeGrid.uniform(1.0, 4)
    th = ModeVector.unit(4)
    with pytest.raises(AlphaOutOfRange):
        solve_homogeneous(th, op, 1.2, 1.0, g)
    with pytest.raises(BetaOutOfRange):
        solve_homogeneous(th, op, 0.5, 1.0, g, beta_range=(1.1, 2.0))
    with pytest.raises(BetaOutOfRange):
        solve_homogeneous(th, op, 0.5, 0.0, g)
    with pytest.raises(LengthMismatch):
        solve_homogeneous(ModeVector.unit(3), op, 0.5, 1.0, g)


# }}}


# {{{ forced problem

def test_forced_single_mode_value():
    op = SpectralOperator(np.array([2.0]))
    g = TimeGrid.uniform(1.0, 20)
    w = solve_forced(ModeTrajectory(g, np.ones((21, 1))), op, 0.5, 1.0)
    assert w.frames[-1, 0] == pytest.approx(FORCED_LAM2, rel=1e-12)


@pytest.mark.parametrize("grid", [TimeGrid.uniform(1.5, 30), TimeGrid.graded(1.5, 30, 2.0)])
def test_constant_forcing_matches_relaxation(grid):
    # f_p = c_p gives w_p = c_p (1 - E_{a,1}(-lambda_p^beta t^a)) / lambda_p^beta
    op = dirichlet_laplacian_1d(math.pi, 6)
    c = np.linspace(1.0, -1.0, 6)
    w = solve_forced(ModeTrajectory(grid, np.tile(c, (grid.N + 1, 1))), op, 0.7, 0.6)
    lb = op.power(0.6)
    E = mittag_leffler(0.7, 1.0, -np.outer(grid.nodes**0.7, lb))
    assert np.allclose(w.frames, c * (1 - E) / lb, atol=1e-13)


def test_forced_checks():
    op = dirichlet_laplacian_1d(math.pi, 4)
    g = TimeGrid.uniform(1.0, 4)
    with pytest.raises(GridMismatch):
        solve_forced(ModeTrajectory(g, np.ones((5, 3))), op, 0.5, 1.0)
    with pytest.raises(GridMismatch):
        ModeTrajectory(g, np.ones((4, 4)))


def test_l2_time_norm():
    op = SpectralOperator(np.array([4.0]))
    g = TimeGrid.uniform(2.0, 8)
    tr = ModeTrajectory(g, np.ones((9, 1)))
    assert l2_time_norm(tr, op, 0.0) == pytest.approx(math.sqrt(2.0))
    assert l2_time_norm(tr, op, 0.5) == pytest.approx(2 * math.sqrt(2.0))


# }}}


# {{{ exponents

def test_exponents():
    assert predicted_exponent(1.0, 0.0, 1.0) == 1.0
    assert predicted_exponent(0.5, 0.0, 1.0) == 0.5
    assert predicted_exponent(3.0, 0.5, 2.0) == 1.0
    assert forced_exponent(1.0, 0.0, 1.0, 0.01) == pytest.approx(1.0 / 2.01)
    with pytest.raises(BadOrdering):
        predicted_exponent(0.5, 0.5, 1.0)
    with pytest.raises(BadOrdering):
        forced_exponent(1.0, 1.0, 1.0, 0.01)
    with pytest.raises(BadOrdering):
        forced_exponent(1.0, 0.0, 1.0, 0.0)


# }}}


# {{{ output

def test_trajectory_csv_round_trip():
    op = dirichlet_laplacian_1d(math.pi, 5)
    g = TimeGrid.uniform(1.0, 7)
    v = solve_homogeneous(ModeVector.power_decay(5, 1.0), op, 0.6, 1.0, g)
    buf = io.StringIO()
    v.to_csv(buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == "t,c1,c2,c3,c4,c5"
    back = ModeTrajectory.from_csv(io.StringIO(text))
    assert back.grid == g and np.array_equal(back.frames, v.frames)
    assert (back - v).frames.max() == 0.0


def test_physical_samples():
    L = 2.0
    g = TimeGrid.uniform(1.0, 3)
    tr = ModeTrajectory(g, np.tile([1.0, 0.0], (4, 1)))
    x = np.linspace(0.0, L, 9)
    u = tr.physical(L, x)
    assert u.shape == (4, 9)
    assert np.allclose(u[0], math.sqrt(2 / L) * np.sin(math.pi * x / L))
    buf = io.StringIO()
    tr.physical_to_csv(buf, L, x)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,x,u" and len(lines) == 1 + 4 * 9


# }}}
