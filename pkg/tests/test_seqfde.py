from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma

from fraccont.abel import residual
from fraccont.errors import (
    CoefficientUnbounded,
    GammaOutOfRange,
    LengthMismatch,
    ValidationError,
)
from fraccont.fracgrid import GridFn, SequentialOrders, TimeGrid, frac_integral
from fraccont.mlf import mittag_leffler
from fraccont.seqfde import (
    SequentialProblem,
    coefficient_sups,
    forcing,
    kernel_constant,
    reconstruct,
    reduce_to_abel,
    singular_exponent,
    solve_sequential,
)


def _const(c):
    return lambda t: np.full_like(np.asarray(t, dtype=float), c)


def _relaxation(grid, a=0.6, lam=1.5, b=0.8):
    return SequentialProblem(SequentialOrders((a,)), [_const(lam)], GridFn.constant(grid, 0.0), [b])


# {{{ reduction

def test_two_term_kernel_matches_hand_expansion():
    e1, e2 = 0.4, 0.7
    p1 = lambda t: 1.0 + t  # noqa: E731
    p2 = lambda t: np.cos(t)  # noqa: E731
    g = TimeGrid.uniform(2.0, 16)
    sp = SequentialProblem(SequentialOrders((e1, e2)), [p1, p2], GridFn.constant(g, 0.0), [0.0, 0.0])
    K = reduce_to_abel(sp).kernel
    rng = np.random.default_rng(3)
    t = rng.uniform(0.0, 2.0, 20)
    s = t * rng.uniform(0.0, 1.0, 20)
    w = rng.standard_normal((20, 1))
    # sigma_0 = 0, sigma_1 = e1, sigma_2 = e1 + e2
    hand = -(p2(t) * (t - s) ** e1 / gamma(e1 + e2) + p1(t) / gamma(e2))[:, None] * w
    assert np.allclose(K(t, s, e2, w), hand, rtol=1e-12, atol=1e-14)


def test_reduced_problem_parameters():
    g = TimeGrid.uniform(1.0, 16)
    sp = SequentialProblem(SequentialOrders((0.5, 0.8)), [_const(1.0), _const(-2.0)],
                           GridFn.constant(g, 1.0), [0.3, 0.0], eta0=0.4)
    p = reduce_to_abel(sp)
    assert p.alpha == 0.8 and p.alpha0 == 0.4
    assert sp.gamma_range() == (0.6, 1.0) and p.gamma == pytest.approx(0.8)
    # b_1 t^(sigma_1 - sigma_0 - 1) is the strongest singularity of g
    assert singular_exponent(sp) == pytest.approx(0.5)
    assert p.first_cell_power == pytest.approx(0.5)
    assert p.kernel.kappa == pytest.approx((2.0 / gamma(1.3) + 1.0 / gamma(0.8)) * (1 + 1e-6))


def test_kernel_constant_uses_the_interval_length():
    g = TimeGrid.uniform(3.0, 8)
    sp = SequentialProblem(SequentialOrders((0.5, 0.5)), [_const(0.0), _const(1.0)],
                           GridFn.constant(g, 0.0), [0.0, 0.0])
    assert kernel_constant(sp) == pytest.approx(3.0**0.5 / gamma(1.0) * (1 + 1e-6))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.2, 1.0), min_size=1, max_size=3), st.floats(0.5, 3.0),
       st.floats(-2.0, 2.0))
def test_kernel_constant_bounds_the_kernel(etas, T, c):
    k = len(etas)
    coeffs = [(lambda j: (lambda t: c * np.sin(t + j)))(j) for j in range(k)]
    g = TimeGrid.uniform(T, 32)
    sp = SequentialProblem(SequentialOrders(tuple(etas)), coeffs, GridFn.constant(g, 0.0), [0.0] * k)
    p = reduce_to_abel(sp)
    rng = np.random.default_rng(0)
    t = rng.uniform(0.0, T, 200)
    s = t * rng.uniform(0.0, 1.0, 200)
    val = np.abs(p.kernel(t, s, p.alpha, np.ones((200, 1))))
    assert np.all(val <= p.kernel.kappa * (1 + 1e-9))


def test_forcing_subtracts_initial_value_terms():
    g = TimeGrid.uniform(1.0, 8)
    sp = SequentialProblem(SequentialOrders((0.6,)), [_const(2.0)], GridFn.constant(g, 1.0), [0.5])
    t = g.nodes[1:]
    assert np.isnan(forcing(sp).values[0, 0])
    assert np.allclose(forcing(sp).component()[1:], 1.0 - 2.0 * 0.5 * t**-0.4 / gamma(0.6))


# }}}


# {{{ solutions

def test_zero_coefficients_give_the_forcing():
    g = TimeGrid.uniform(1.0, 64)
    f = GridFn.from_callable(g, lambda t: 1 + t)
    sp = SequentialProblem(SequentialOrders((0.5, 0.3)), [_const(0.0), _const(0.0)], f, [0.2, -0.1])
    psi, y = solve_sequential(sp)
    assert np.allclose(psi.component()[1:], f.component()[1:], atol=1e-14)
    t = g.nodes[1:]
    expect = (0.2 * t**-0.5 / gamma(0.5) + -0.1 * t**-0.2 / gamma(0.8)
              + frac_integral(f, 0.8).component()[1:])
    assert np.allclose(y.component()[1:], expect, atol=1e-13)


def test_single_order_relaxation():
    # D^a y + lam y = 0, D^(a-1) y(0) = b  =>  y = b t^(a-1) E_{a,a}(-lam t^a)
    a, lam, b = 0.6, 1.5, 0.8
    errs = []
    for N in (128, 512):
        g = TimeGrid.graded_for(1.0, N, a)
        psi, y = solve_sequential(_relaxation(g, a, lam, b))
        t = g.nodes[1:]
        exact = b * t ** (a - 1) * mittag_leffler(a, a, -lam * t**a)
        errs.append(np.max(t**0.7 * np.abs(y.component()[1:] - exact)))
    assert errs[-1] < 1e-4 and errs[0] / errs[1] > 3


def test_residual_within_tolerance():
    g = TimeGrid.uniform(1.0, 128)
    sp = _relaxation(g)
    tol = 1e-12
    psi, _ = solve_sequential(sp, tol=tol)
    assert residual(reduce_to_abel(sp), psi) <= 5 * tol


def test_manufactured_two_term_equation():
    # psi = 1 with p_1 = 1, p_2 = t; f assembled from the closed-form y and D^{sigma_1} y
    e1, e2, b1, b2 = 0.5, 0.5, 0.7, -0.3
    s1, s2 = e1, e1 + e2

    def f(t):
        y = b1 * t ** (s1 - 1) / gamma(s1) + b2 * t ** (s2 - 1) / gamma(s2) + t**s2 / gamma(s2 + 1)
        d1 = b2 * t ** (s2 - s1 - 1) / gamma(s2 - s1) + t ** (s2 - s1) / gamma(s2 - s1 + 1)
        return 1.0 + d1 + t * y

    errs = []
    for N in (256, 1024):
        g = TimeGrid.uniform(1.0, N)
        sp = SequentialProblem(SequentialOrders((e1, e2)), [_const(1.0), lambda t: t],
                               GridFn.from_callable(g, f, weight=0.5), [b1, b2])
        psi, y = solve_sequential(sp, gamma=0.75)
        t = g.nodes[1:]
        errs.append(np.max(t**0.75 * np.abs(psi.component()[1:] - 1.0)))
        exact_y = b1 * t**-0.5 / gamma(0.5) + b2 + t
        yerr = np.max(t**0.5 * np.abs(y.component()[1:] - exact_y))
    assert errs[-1] < 2e-4 and errs[0] / errs[1] > 3.5
    assert yerr < 2e-4


def test_reconstruct_adds_initial_terms():
    g = TimeGrid.uniform(1.0, 32)
    sp = _relaxation(g)
    psi = GridFn.from_callable(g, lambda t: np.zeros_like(t), weight=0.7)
    y = reconstruct(sp, psi)
    t = g.nodes[1:]
    assert y.weight == pytest.approx(0.4)
    assert np.allclose(y.component()[1:], 0.8 * t**-0.4 / gamma(0.6))


# }}}


# {{{ validation

def test_length_checks():
    g = TimeGrid.uniform(1.0, 8)
    with pytest.raises(LengthMismatch) as err:
        SequentialProblem(SequentialOrders((0.5, 0.5)), [_const(1.0)], GridFn.constant(g, 0.0),
                          [0.0, 0.0])
    assert err.value.key == "pcoeffs"
    with pytest.raises(LengthMismatch):
        SequentialProblem(SequentialOrders((0.5,)), [_const(1.0)], GridFn.constant(g, 0.0), [])


def test_gamma_window():
    g = TimeGrid.uniform(1.0, 8)
    sp = _relaxation(g)
    for bad in (0.4, 1.0, 0.2):
        with pytest.raises(GammaOutOfRange):
            reduce_to_abel(sp, bad)
    f = GridFn.from_callable(g, lambda t: t**-0.9, weight=0.9)
    sp = SequentialProblem(SequentialOrders((0.6,)), [_const(1.0)], f, [0.0])
    with pytest.raises(GammaOutOfRange):
        reduce_to_abel(sp, 0.7)


def test_box_and_lower_order():
    g = TimeGrid.uniform(1.0, 8)
    with pytest.raises(ValidationError):
        SequentialProblem(SequentialOrders((0.5,)), [_const(1.0)], GridFn.constant(g, 0.0), [2.0],
                          bbox=(-1.0, 1.0))
    with pytest.raises(ValidationError):
        SequentialProblem(SequentialOrders((0.5,)), [_const(1.0)], GridFn.constant(g, 0.0), [0.0],
                          eta0=0.6)


def test_unbounded_coefficient():
    g = TimeGrid.uniform(1.0, 8)
    with np.errstate(divide="ignore"):
        sp = SequentialProblem(SequentialOrders((0.5,)), [lambda t: 1.0 / t],
                               GridFn.constant(g, 0.0), [0.0])
        with pytest.raises(CoefficientUnbounded):
            coefficient_sups(sp)


# }}}
