r"""Generalised Abel integral equations.

Second kind, on a grid ``0 = t_0 < ... < t_N = T``:

.. math::

    u(t) = g(t) + \int_0^t K(t, s, \alpha, z, u(s)) (t-s)^{\alpha-1}\,ds.

The kernel offset :math:`K(t,s,\cdot,0)` is moved into the forcing,
:math:`g^* = g + \int_0^t K(t,s,0)(t-s)^{\alpha-1}ds`, and the remainder
:math:`K^* = K - K(\cdot,0)` is iterated (Picard) on the discrete system
obtained by product integration.

First kind, with :math:`K_0(t,t) = 1`:

.. math::

    \frac{1}{\Gamma(\alpha)}\int_0^t K_0(t,s)(t-s)^{\alpha-1}u(s)\,ds = f(t),

solved through the factorisation :math:`\mathcal{A} = J^\alpha(I - B)`, i.e.
:math:`u = D^\alpha f + Bu` with :math:`Bu(t) = \int_0^t L(t,s)u(s)ds` and

.. math::

    L(t,s) = -\frac{\sin\pi\alpha}{\pi}\int_0^1 (1-\theta)^{-\alpha}\theta^{\alpha}
        \,\partial_t K_0(s+\theta(t-s), s)\,d\theta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import digamma, gamma, roots_jacobi

from fraccont.errors import (
    AlphaOutOfRange,
    DiagonalNotNormalized,
    GridMismatch,
    KernelProbeFailed,
    MaxIterExceeded,
    NegativeLambda,
    NotConverged,
    ValidationError,
)
from fraccont.fracgrid import (
    GridFn,
    TimeGrid,
    log_product_weights,
    ml_convolve,
    product_weights,
    rl_derivative,
)
from fraccont.mlf import mittag_leffler

#: kernel callables take (t, s, alpha, z, w) with t, s of shape (m,) and w of shape (m, d)
Kernel = Callable[[np.ndarray, np.ndarray, float, np.ndarray, np.ndarray], np.ndarray]

PROBES = 256


@dataclass(frozen=True)
class KernelSpec:
    """Kernel with declared Lipschitz constant ``kappa`` and offset bound ``M0``.

    ``K(t, s, alpha, z, w)`` must broadcast over arrays: ``t`` and ``s`` of
    shape ``(m,)``, ``w`` of shape ``(m, d)``, result of shape ``(m, d)``.
    ``DK`` is the Jacobian in ``w`` with shape ``(m, d, d)``.  Setting
    ``linear`` declares ``K`` affine in ``w``, which lets the solver assemble
    the iteration matrix once.
    """

    K: Kernel
    kappa: float
    M0: float
    z: np.ndarray = field(default_factory=lambda: np.zeros(0))
    DK: Kernel | None = None
    linear: bool = False

    def __post_init__(self) -> None:
        if not self.kappa >= 0:
            raise ValidationError(f"kappa must be non-negative, got {self.kappa}", key="kappa")
        if not self.M0 >= 0:
            raise ValidationError(f"M0 must be non-negative, got {self.M0}", key="M0")
        object.__setattr__(self, "z", np.atleast_1d(np.asarray(self.z, dtype=float)))

    def __call__(self, t, s, alpha, w):
        return _as_2d(self.K(t, s, alpha, self.z, w), w.shape)


@dataclass(frozen=True)
class AbelProblem:
    """Second-kind Abel equation with solution sought in ``C_gamma``.

    ``first_cell_power`` is the exponent used to extrapolate ``K*`` on the
    first cell when ``gamma > 0`` (defaults to ``gamma``).
    """

    kernel: KernelSpec
    g: GridFn
    alpha: float
    gamma: float = 0.0
    alpha0: float | None = None
    alpha1: float | None = None
    first_cell_power: float | None = None

    def __post_init__(self) -> None:
        a0 = self.alpha if self.alpha0 is None else self.alpha0
        a1 = self.alpha if self.alpha1 is None else self.alpha1
        if not (0 < a0 <= self.alpha <= a1):
            raise AlphaOutOfRange(
                f"alpha={self.alpha} must satisfy 0 < alpha0 <= alpha <= alpha1", key="alpha")
        if not 0.0 <= self.gamma < 1.0:
            raise ValidationError(f"gamma must lie in [0, 1), got {self.gamma}", key="gamma")
        if self.g.weight > self.gamma:
            raise ValidationError(
                f"forcing weight {self.g.weight} exceeds solution weight {self.gamma}", key="gamma")
        p = self.power
        if p is not None and not 0.0 <= p < 1.0:
            raise ValidationError(f"first-cell power must lie in [0, 1), got {p}",
                                  key="first_cell_power")

    @property
    def grid(self) -> TimeGrid:
        return self.g.grid

    @property
    def power(self) -> float | None:
        if self.gamma == 0.0:
            return None
        return self.gamma if self.first_cell_power is None else self.first_cell_power


@dataclass(frozen=True)
class GronwallCertificate:
    """Multiplier ``1 + lam T E_{alpha,alpha}(lam T^alpha)`` for ``||phi||_p``.

    ``sharp_factor`` is ``E_{alpha,1}(lam T^alpha)``, the exact L^1-kernel
    (Young) bound.  When ``factor < sharp_factor`` (small ``lam T^alpha``)
    the multiplier is not a valid bound; ``valid`` records this.
    """

    factor: float
    pnorm: float
    sharp_factor: float
    gnorm: float

    @property
    def bound(self) -> float:
        return self.factor * self.gnorm

    @property
    def sharp_bound(self) -> float:
        return self.sharp_factor * self.gnorm

    @property
    def valid(self) -> bool:
        return self.factor >= self.sharp_factor * (1.0 - 1e-12)


@dataclass(frozen=True)
class SolveInfo:
    iterations: int
    increment: float
    residual: float
    norm: float
    bound: float
    gstar: GridFn


# {{{ helpers

def _as_2d(v, shape) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.broadcast_to(v.reshape(v.shape[0], -1) if v.ndim >= 1 else v, shape)


def _jac(DK, t, s, alpha, z, w) -> np.ndarray:
    J = np.asarray(DK(t, s, alpha, z, w), dtype=float)
    m, d = w.shape
    if J.ndim < 3:
        J = np.broadcast_to(J.reshape(-1, 1) if J.ndim == 1 else J, (m, d))
        if d == 1:
            return J.reshape(m, 1, 1)
        return np.einsum("mi,ij->mij", J, np.eye(d))
    return np.broadcast_to(J, (m, d, d))


def linear_kernel(lam: float, d: int = 1) -> KernelSpec:
    """The fractional relaxation kernel ``K = lam w / Gamma(alpha)``.

    With ``g = 1`` the solution is ``E_{alpha,1}(lam t^alpha)``.  The
    declared constants use the smallest order the kernel is used with, so
    the kernel is rebuilt per order by :func:`relaxation_problem`.
    """
    def K(t, s, alpha, z, w):
        return lam * w / gamma(alpha)

    def DK(t, s, alpha, z, w):
        return np.full(w.shape[0], lam / gamma(alpha))

    return KernelSpec(K=K, kappa=abs(lam), M0=0.0, DK=DK, linear=True)


def linear_kernel_dalpha(lam: float) -> Kernel:
    """Derivative in alpha of :func:`linear_kernel`."""
    def dK(t, s, alpha, z, w):
        return -lam * digamma(alpha) * w / gamma(alpha)

    return dK


def relaxation_problem(lam: float, alpha: float, grid: TimeGrid, g: float = 1.0) -> AbelProblem:
    """``u = g + lam J^alpha u``, whose solution is ``g E_{alpha,1}(lam t^alpha)``."""
    spec = linear_kernel(lam)
    spec = KernelSpec(K=spec.K, kappa=abs(lam) / gamma(alpha), M0=0.0, DK=spec.DK, linear=True)
    return AbelProblem(kernel=spec, g=GridFn.constant(grid, g), alpha=alpha)


def probe_kernel(spec: KernelSpec, grid: TimeGrid, alpha: float, d: int, scale: float = 1.0,
                 probes: int = PROBES, seed: int = 0) -> None:
    """Randomised spot check of the declared ``kappa`` and ``M0``."""
    if probes <= 0:
        return
    rng = np.random.default_rng(seed)
    T = grid.T
    t = rng.uniform(0.0, T, probes)
    t[0] = T
    s = t * rng.uniform(0.0, 1.0, probes)
    w1 = scale * rng.standard_normal((probes, d))
    w2 = scale * rng.standard_normal((probes, d))
    k0 = spec(t, s, alpha, np.zeros((probes, d)))
    n0 = np.linalg.norm(k0, axis=1)
    slack = 1e-9
    if np.any(n0 > spec.M0 * (1 + slack) + 1e-300):
        i = int(np.argmax(n0))
        raise KernelProbeFailed(
            f"|K(t,s,0)| = {n0[i]:.6g} exceeds declared M0 = {spec.M0:.6g} "
            f"at t={t[i]:.6g}, s={s[i]:.6g}", key="M0")
    dk = np.linalg.norm(spec(t, s, alpha, w1) - spec(t, s, alpha, w2), axis=1)
    dw = np.linalg.norm(w1 - w2, axis=1)
    if np.any(dk > spec.kappa * dw * (1 + slack) + 1e-300):
        i = int(np.argmax(dk - spec.kappa * dw))
        raise KernelProbeFailed(
            f"Lipschitz ratio {dk[i] / dw[i]:.6g} exceeds declared kappa = {spec.kappa:.6g}",
            key="kappa")


def _weighted_sup(v: np.ndarray, t: np.ndarray, gamma_: float) -> float:
    n = np.linalg.norm(v, axis=1)
    if gamma_ > 0:
        return float(np.max(t[1:] ** gamma_ * n[1:]))
    return float(np.max(n))


class _Operator:
    """Discrete ``w -> sum_j W[n,j] K*(t_n, t_j, w_j)`` for one problem."""

    def __init__(self, p: AbelProblem):
        self.p = p
        grid = p.grid
        t = grid.nodes
        self.t = t
        N = grid.N
        d = p.g.dim
        self.d = d
        alpha = p.alpha
        spec = p.kernel
        W = product_weights(grid, alpha, p.power)
        start = 1 if p.gamma > 0 else 0
        n, j = np.nonzero(W)
        keep = j >= start
        self.n, self.j = n[keep], j[keep]
        self.w = W[self.n, self.j]
        self.N = N
        self.start = start
        # the first-cell fit puts an entry at (1, 2); freeze s at t there
        tn, sj = t[self.n], np.minimum(t[self.j], t[self.n])
        self.tn, self.sj = tn, sj
        zeros = np.zeros((self.n.size, d))
        self.k0 = spec(tn, sj, alpha, zeros)
        self.A = None
        self.blocks = None
        if spec.linear:
            # columns of the affine map for each pair
            cols = []
            for i in range(d):
                e = np.zeros((self.n.size, d))
                e[:, i] = 1.0
                cols.append(spec(tn, sj, alpha, e) - self.k0)
            M = np.stack(cols, axis=2) * self.w[:, None, None]
            if d == 1:
                A = np.zeros((N + 1, N + 1))
                A[self.n, self.j] = M[:, 0, 0]
                self.A = A
            else:
                self.blocks = M

    def __call__(self, u: np.ndarray) -> np.ndarray:
        N, d = self.N, self.d
        if self.A is not None:
            uu = np.where(np.isfinite(u), u, 0.0)
            return self.A @ uu
        if self.blocks is not None:
            vals = np.einsum("mij,mj->mi", self.blocks, u[self.j])
        else:
            k = self.p.kernel(self.tn, self.sj, self.p.alpha, u[self.j])
            vals = (k - self.k0) * self.w[:, None]
        out = np.empty((N + 1, d))
        for i in range(d):
            out[:, i] = np.bincount(self.n, weights=vals[:, i], minlength=N + 1)
        return out


def _gstar(p: AbelProblem) -> np.ndarray:
    """Forcing with the kernel offset integrated in."""
    g = np.array(p.g.values)
    if p.kernel.M0 == 0.0:
        return g
    grid = p.grid
    t = grid.nodes
    N = grid.N
    W = product_weights(grid, p.alpha)
    n, j = np.tril_indices(N + 1)
    k0 = p.kernel(t[n], t[j], p.alpha, np.zeros((n.size, p.g.dim)))
    vals = k0 * W[n, j][:, None]
    off = np.stack([np.bincount(n, weights=vals[:, i], minlength=N + 1)
                    for i in range(p.g.dim)], axis=1)
    return g + off


# }}}


# {{{ second kind

def picard_bound_factor(kappa: float, alpha: float, T: float, gamma_: float) -> float:
    """``Gamma(1-gamma) E_{alpha,1-gamma}(kappa Gamma(alpha) T^alpha)``."""
    return float(gamma(1.0 - gamma_) * mittag_leffler(alpha, 1.0 - gamma_,
                                                      kappa * gamma(alpha) * T**alpha))


def lp_stability_factor(kappa: float, alpha: float, T: float) -> float:
    """``1 + kappa T Gamma(alpha) E_{alpha,alpha}(kappa Gamma(alpha) T^alpha)``."""
    x = kappa * gamma(alpha)
    return float(1.0 + x * T * mittag_leffler(alpha, alpha, x * T**alpha))


def solve_second_kind(p: AbelProblem, tol: float = 1e-12, max_iter: int = 2000,
                      probes: int = PROBES, seed: int = 0, return_info: bool = False):
    """Picard iteration ``u_{n+1} = g* + A* u_n`` on the product-integration grid.

    Stops when the (weighted) sup-norm increment is at most
    ``tol * max(1, ||u||)``.  Returns the solution as a :class:`GridFn`
    (and a :class:`SolveInfo` with ``return_info``).
    """
    if not tol > 0:
        raise ValidationError(f"tol must be positive, got {tol}", key="tol")
    grid = p.grid
    t = grid.nodes
    gscale = 1.0 + _weighted_sup(np.nan_to_num(p.g.values), t, p.gamma)
    probe_kernel(p.kernel, grid, p.alpha, p.g.dim, scale=gscale, probes=probes, seed=seed)

    gs = _gstar(p)
    op = _Operator(p)
    u = np.array(gs)
    if p.gamma > 0:
        u[0] = np.nan
    inc = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        new = gs + op(u)
        if p.gamma > 0:
            new[0] = np.nan
        if not np.all(np.isfinite(new[op.start:])):
            raise MaxIterExceeded(f"Picard iterates became non-finite after {it} steps")
        inc = _weighted_sup(new - u if p.gamma == 0 else np.nan_to_num(new - u), t, p.gamma)
        u = new
        if inc <= tol * max(1.0, _weighted_sup(np.nan_to_num(u), t, p.gamma)):
            break
    else:
        raise MaxIterExceeded(
            f"Picard increment {inc:.3g} above tolerance after {max_iter} iterations "
            f"(kappa Gamma(alpha) T^alpha = {p.kernel.kappa * gamma(p.alpha) * grid.T ** p.alpha:.3g})")

    uu = np.nan_to_num(u)
    res = _weighted_sup(np.nan_to_num(u - gs - op(u)), t, p.gamma)
    norm = _weighted_sup(uu, t, p.gamma)
    sol = GridFn(grid, u, p.gamma)
    if not return_info:
        return sol
    bound = picard_bound_factor(p.kernel.kappa, p.alpha, grid.T, p.gamma) * \
        _weighted_sup(np.nan_to_num(gs), t, p.gamma)
    return sol, SolveInfo(iterations=it, increment=inc, residual=res, norm=norm, bound=bound,
                          gstar=GridFn(grid, gs, p.gamma))


def residual(p: AbelProblem, u: GridFn) -> float:
    """Weighted sup of ``u - g* - A* u`` on the grid."""
    op = _Operator(p)
    gs = _gstar(p)
    r = np.nan_to_num(u.values - gs - op(np.array(u.values)))
    return _weighted_sup(r, p.grid.nodes, p.gamma)


# }}}


# {{{ linear resolvent and Gronwall

def _check_resolvent_alpha(alpha: float) -> None:
    if not 0.0 < alpha <= 1.0:
        raise AlphaOutOfRange(f"alpha must lie in (0, 1], got {alpha}", key="alpha")


def solve_linear_resolvent(g: GridFn, lam: float, alpha: float) -> GridFn:
    """Solution of ``u = g + lam J^alpha u`` through the resolvent kernel,

    ``u(t) = g(t) + lam int_0^t (t-s)^(alpha-1) E_{alpha,alpha}(lam (t-s)^alpha) g(s) ds``,

    with the kernel integrated exactly against piecewise-linear ``g``.
    """
    _check_resolvent_alpha(alpha)
    if g.weight > 0:
        raise ValidationError("the resolvent solver needs unweighted data", key="g")
    if lam == 0:
        return g
    conv = np.stack([ml_convolve(g.grid, alpha, lam, g.values[:, i]) for i in range(g.dim)], axis=1)
    return GridFn(g.grid, g.values + lam * conv, 0.0)


def gronwall_certificate(gnorm: float, lam: float, alpha: float, T: float,
                         p: float = 2.0) -> GronwallCertificate:
    """Certificate multiplier for ``phi <= g + lam J^alpha phi``."""
    if lam < 0:
        raise NegativeLambda(f"lambda must be non-negative, got {lam}", key="lambda")
    _check_resolvent_alpha(alpha)
    if not T > 0:
        raise ValidationError(f"T must be positive, got {T}", key="T")
    if not (p >= 1):
        raise ValidationError(f"p must be >= 1, got {p}", key="p")
    x = lam * T**alpha
    factor = 1.0 + lam * T * float(mittag_leffler(alpha, alpha, x))
    sharp = float(mittag_leffler(alpha, 1.0, x))
    return GronwallCertificate(factor=factor, pnorm=float(p), sharp_factor=sharp, gnorm=float(gnorm))


# }}}


# {{{ first kind

def _jacobi_rule(alpha: float, nodes: int):
    """Gauss rule on [0, 1] for the weight (1-theta)^(-alpha) theta^alpha."""
    x, w = roots_jacobi(nodes, -alpha, alpha)
    return 0.5 * (x + 1.0), 0.5 * w


def first_kind_kernel(dK0dt: Callable, t: np.ndarray, s: np.ndarray, alpha: float,
                      z: np.ndarray, nodes: int = 16) -> np.ndarray:
    """The resolvent-factor kernel ``L(t, s)`` for arrays of pairs."""
    th, wt = _jacobi_rule(alpha, nodes)
    out = np.zeros(np.broadcast(t, s).shape)
    for k in range(nodes):
        tau = s + th[k] * (t - s)
        out += wt[k] * np.asarray(dK0dt(tau, s, alpha, z), dtype=float)
    return -math.sin(math.pi * alpha) / math.pi * out


def first_kind_apply(K0: Callable, u: GridFn, alpha: float, z: Sequence[float] = ()) -> GridFn:
    """Forward operator ``(1/Gamma(alpha)) int_0^t K0(t,s) (t-s)^(alpha-1) u(s) ds``."""
    grid = u.grid
    t = grid.nodes
    z = np.atleast_1d(np.asarray(z, dtype=float))
    W = product_weights(grid, alpha) / gamma(alpha)
    n, j = np.tril_indices(grid.N + 1)
    k = np.asarray(K0(t[n], t[j], alpha, z), dtype=float) * np.ones(n.size)
    M = np.zeros_like(W)
    M[n, j] = W[n, j] * k
    return GridFn(grid, M @ u.values, 0.0)


def solve_first_kind(K0: Callable, dK0dt: Callable, f: GridFn, alpha: float,
                     z: Sequence[float] = (), tol: float = 1e-12, max_iter: int = 2000,
                     nodes: int = 16) -> GridFn:
    """Invert the first-kind operator through ``u = D^alpha f + B u``.

    ``D^alpha f`` is obtained by inverting the product-trapezoidal
    :math:`J^\\alpha`; ``B`` is integrated by the trapezoidal rule.
    """
    if not 0.0 < alpha < 1.0:
        raise AlphaOutOfRange(f"alpha must lie in (0, 1), got {alpha}", key="alpha")
    if f.weight > 0:
        raise ValidationError("first-kind data must be unweighted", key="f")
    z = np.atleast_1d(np.asarray(z, dtype=float))
    grid = f.grid
    t = grid.nodes
    diag = np.asarray(K0(t, t, alpha, z), dtype=float) * np.ones_like(t)
    if np.max(np.abs(diag - 1.0)) > 1e-12:
        raise DiagonalNotNormalized(
            f"K0(t,t) deviates from 1 by {np.max(np.abs(diag - 1.0)):.3g}", key="K0")

    rhs = rl_derivative(f, alpha, method="inverse").values
    N = grid.N
    n, j = np.tril_indices(N + 1, -1)
    L = first_kind_kernel(dK0dt, t[n], t[j], alpha, z, nodes)
    Ld = first_kind_kernel(dK0dt, t, t, alpha, z, nodes)
    # trapezoidal weights on [0, t_n]
    h = np.diff(t)
    B = np.zeros((N + 1, N + 1))
    B[n, j] = L * 0.5 * (h[j] + np.where(j > 0, h[j - 1], 0.0))
    B[np.arange(1, N + 1), np.arange(1, N + 1)] = Ld[1:] * 0.5 * h

    u = np.array(rhs)
    inc = math.inf
    for _ in range(max_iter):
        new = rhs + B @ u
        inc = float(np.max(np.abs(new - u)))
        u = new
        if inc <= tol * max(1.0, float(np.max(np.abs(u)))):
            break
    else:
        raise MaxIterExceeded(f"first-kind Picard increment {inc:.3g} after {max_iter} iterations")
    return GridFn(grid, u, 0.0)


# }}}


# {{{ order sensitivity

def order_sensitivity(p: AbelProblem, u: GridFn, dgdAlpha: GridFn, dKdAlpha: Kernel,
                      DK: Kernel | None = None, tol: float = 1e-12,
                      max_iter: int = 2000) -> GridFn:
    """``w = du/dalpha`` from the linear Abel equation

    ``w = g1 + int DK(t,s,u(s)) w(s) (t-s)^(alpha-1) ds`` with
    ``g1 = dg/dalpha + int dK/dalpha(t,s,u) (t-s)^(alpha-1) ds
    + int K(t,s,u) ln(t-s) (t-s)^(alpha-1) ds``.
    """
    if p.gamma > 0:
        raise ValidationError("order sensitivity is implemented for gamma = 0", key="gamma")
    if u.grid != p.grid or dgdAlpha.grid != p.grid:
        raise GridMismatch("u, dg/dalpha and the problem must share a grid", key="grid")
    DK = DK or p.kernel.DK
    if DK is None:
        raise ValidationError("the w-derivative DK of the kernel is required", key="DK")
    res = residual(p, u)
    scale = 1.0 + u.weighted_sup(0.0)
    if res > 1e-8 * scale:
        raise NotConverged(f"residual {res:.3g} of u too large to differentiate")

    grid = p.grid
    t = grid.nodes
    N = grid.N
    d = u.dim
    alpha = p.alpha
    z = p.kernel.z
    W = product_weights(grid, alpha)
    WL = log_product_weights(grid, alpha)
    n, j = np.tril_indices(N + 1)
    uj = np.array(u.values)[j]
    tn, sj = t[n], t[j]
    kval = p.kernel(tn, sj, alpha, uj)
    dka = _as_2d(dKdAlpha(tn, sj, alpha, z, uj), uj.shape)
    vals = dka * W[n, j][:, None] + kval * WL[n, j][:, None]
    g1 = np.array(dgdAlpha.values) + np.stack(
        [np.bincount(n, weights=vals[:, i], minlength=N + 1) for i in range(d)], axis=1)

    J = _jac(DK, tn, sj, alpha, z, uj) * W[n, j][:, None, None]
    if d == 1:
        A = np.zeros((N + 1, N + 1))
        A[n, j] = J[:, 0, 0]
        apply = lambda w: A @ w  # noqa: E731
    else:
        def apply(w):
            v = np.einsum("mij,mj->mi", J, w[j])
            return np.stack([np.bincount(n, weights=v[:, i], minlength=N + 1)
                             for i in range(d)], axis=1)

    w = np.array(g1)
    inc = math.inf
    for _ in range(max_iter):
        new = g1 + apply(w)
        inc = float(np.max(np.abs(new - w)))
        w = new
        if inc <= tol * max(1.0, float(np.max(np.abs(w)))):
            break
    else:
        raise MaxIterExceeded(f"sensitivity Picard increment {inc:.3g} after {max_iter} iterations")
    return GridFn(grid, w, 0.0)


# }}}
