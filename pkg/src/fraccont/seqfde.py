r"""Linear sequential fractional differential equations.

With orders :math:`\eta_1, \dots, \eta_k \in (0, 1]` and
:math:`\sigma_j = \eta_1 + \dots + \eta_j`, the equation

.. math::

    \mathcal{D}^{\sigma_k} y + \sum_{j=1}^{k} p_j(t)\,\mathcal{D}^{\sigma_{k-j}} y = f,
    \qquad \mathcal{D}^{\sigma_j - 1} y(0) = b_j,

is rewritten for :math:`\psi = \mathcal{D}^{\sigma_k} y` using

.. math::

    y = \sum_{j=1}^k b_j \frac{t^{\sigma_j-1}}{\Gamma(\sigma_j)} + J^{\sigma_k}\psi,
    \qquad
    \mathcal{D}^{\sigma_m} y = \sum_{\ell=m+1}^k b_\ell
        \frac{t^{\sigma_\ell-\sigma_m-1}}{\Gamma(\sigma_\ell-\sigma_m)}
        + J^{\sigma_k-\sigma_m}\psi,

which gives a second-kind Abel equation of order :math:`\eta_k`

.. math::

    \psi(t) = g(t) - \int_0^t \sum_{m=0}^{k-1} p_{k-m}(t)
        \frac{(t-s)^{\sigma_{k-1}-\sigma_m}}{\Gamma(\sigma_k-\sigma_m)}\,\psi(s)
        \,(t-s)^{\eta_k-1}\,ds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import gamma as gamma_fn

from fraccont.abel import AbelProblem, KernelSpec, solve_second_kind
from fraccont.errors import (
    CoefficientUnbounded,
    GammaOutOfRange,
    LengthMismatch,
    ValidationError,
)
from fraccont.fracgrid import GridFn, SequentialOrders, TimeGrid, frac_integral

Coefficient = Callable[[np.ndarray], np.ndarray]

#: points used (on top of the grid nodes) to estimate sup-norms of coefficients
SUP_SAMPLES = 4097


@dataclass(frozen=True)
class SequentialProblem:
    """Equation data.  ``pcoeffs[j-1]`` is ``p_j`` and ``bvals[j-1]`` is ``b_j``.

    ``eta0`` is the declared lower bound on the orders (defaults to their
    minimum) and ``bbox`` an optional box ``(B0, B1)`` for the initial
    values.  Coefficients must accept and return arrays.
    """

    orders: SequentialOrders
    pcoeffs: Sequence[Coefficient]
    f: GridFn
    bvals: Sequence[float]
    eta0: float | None = None
    bbox: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        k = self.orders.k
        if len(self.pcoeffs) != k:
            raise LengthMismatch(f"need {k} coefficients, got {len(self.pcoeffs)}", key="pcoeffs")
        if len(self.bvals) != k:
            raise LengthMismatch(f"need {k} initial values, got {len(self.bvals)}", key="bvals")
        if self.f.dim != 1:
            raise ValidationError("the forcing must be scalar", key="f")
        if self.bbox is not None:
            lo, hi = self.bbox
            if not all(lo <= b <= hi for b in self.bvals):
                raise ValidationError(f"initial values {list(self.bvals)} leave [{lo}, {hi}]",
                                      key="bvals")
        e0 = self.lower_order
        if not 0.0 < e0 <= min(self.orders.etas):
            raise ValidationError(
                f"eta0={e0} must lie in (0, min(eta_j)]", key="eta0")

    @property
    def grid(self) -> TimeGrid:
        return self.f.grid

    @property
    def lower_order(self) -> float:
        return float(min(self.orders.etas) if self.eta0 is None else self.eta0)

    def gamma_range(self) -> tuple[float, float]:
        """Open interval of admissible solution weights."""
        return 1.0 - self.lower_order, 1.0

    def default_gamma(self) -> float:
        lo, hi = self.gamma_range()
        return 0.5 * (lo + hi)


def _sigmas(sp: SequentialProblem) -> np.ndarray:
    """``sigma_0 = 0, sigma_1, ..., sigma_k``."""
    return np.concatenate([[0.0], np.asarray(sp.orders.sigmas, dtype=float)])


def coefficient_sups(sp: SequentialProblem) -> np.ndarray:
    """Estimated ``||p_j||_inf`` on ``[0, T]`` (grid nodes plus a fine sample)."""
    t = np.union1d(sp.grid.nodes, np.linspace(0.0, sp.grid.T, SUP_SAMPLES))
    out = np.empty(sp.orders.k)
    for j, p in enumerate(sp.pcoeffs):
        v = np.broadcast_to(np.asarray(p(t), dtype=float), t.shape)
        if not np.all(np.isfinite(v)):
            raise CoefficientUnbounded(f"coefficient p_{j + 1} is not finite on [0, T]",
                                       key="pcoeffs")
        out[j] = float(np.max(np.abs(v)))
    return out


def kernel_constant(sp: SequentialProblem, sups: np.ndarray | None = None) -> float:
    """Lipschitz constant of the reduced kernel in its state argument."""
    sig = _sigmas(sp)
    k = sp.orders.k
    sups = coefficient_sups(sp) if sups is None else sups
    T = max(1.0, sp.grid.T)
    kap = 0.0
    for m in range(k):
        kap += sups[k - m - 1] * T ** (sig[k - 1] - sig[m]) / gamma_fn(sig[k] - sig[m])
    # slack for the sampled sup
    return float(kap * (1.0 + 1e-6))


def forcing(sp: SequentialProblem) -> GridFn:
    """``g = f`` minus the contribution of the initial values."""
    sig = _sigmas(sp)
    k = sp.orders.k
    t = sp.grid.nodes
    tp = t[1:]
    b = np.asarray(sp.bvals, dtype=float)
    g = np.array(sp.f.values[:, 0])
    for m in range(k):
        pm = np.broadcast_to(np.asarray(sp.pcoeffs[k - m - 1](tp), dtype=float), tp.shape)
        acc = np.zeros_like(tp)
        for ell in range(m + 1, k + 1):
            if b[ell - 1] != 0.0:
                e = sig[ell] - sig[m]
                acc += b[ell - 1] * tp ** (e - 1.0) / gamma_fn(e)
        g[1:] -= pm * acc
    g[0] = np.nan
    return GridFn(sp.grid, g, max(sp.default_gamma(), sp.f.weight))


def singular_exponent(sp: SequentialProblem) -> float:
    """Largest ``q`` with a ``t^(-q)`` term in the reduced forcing."""
    sig = _sigmas(sp)
    k = sp.orders.k
    b = np.asarray(sp.bvals, dtype=float)
    sups = coefficient_sups(sp)
    q = sp.f.weight
    for m in range(k):
        if sups[k - m - 1] == 0.0:
            continue
        for ell in range(m + 1, k + 1):
            if b[ell - 1] != 0.0:
                q = max(q, 1.0 - (sig[ell] - sig[m]))
    return float(max(q, 0.0))


def reduce_to_abel(sp: SequentialProblem, gamma: float | None = None) -> AbelProblem:
    """Second-kind Abel problem for ``psi = D^{sigma_k} y`` in ``C_gamma``."""
    lo, hi = sp.gamma_range()
    gamma = sp.default_gamma() if gamma is None else float(gamma)
    if not lo < gamma < hi:
        raise GammaOutOfRange(f"gamma={gamma} must lie in ({lo:.6g}, {hi:.6g})", key="gamma")
    sig = _sigmas(sp)
    k = sp.orders.k
    eta_k = float(sp.orders.etas[-1])
    sups = coefficient_sups(sp)
    kappa = kernel_constant(sp, sups)
    pcs = tuple(sp.pcoeffs)
    pows = [sig[k - 1] - sig[m] for m in range(k)]
    gams = [gamma_fn(sig[k] - sig[m]) for m in range(k)]

    def K(t, s, alpha, z, w):
        d = t - s
        c = np.zeros_like(d)
        for m in range(k):
            c += np.asarray(pcs[k - m - 1](t), dtype=float) * d ** pows[m] / gams[m]
        return -c[:, None] * w

    if sp.f.weight > gamma:
        raise GammaOutOfRange(
            f"forcing weight {sp.f.weight} exceeds gamma={gamma}", key="gamma")
    g = GridFn(sp.grid, forcing(sp).values, gamma)
    q = singular_exponent(sp)
    spec = KernelSpec(K=K, kappa=kappa, M0=0.0, linear=True)
    return AbelProblem(kernel=spec, g=g, alpha=eta_k, gamma=gamma,
                       alpha0=min(eta_k, sp.lower_order), first_cell_power=min(q, gamma))


def reconstruct(sp: SequentialProblem, psi: GridFn) -> GridFn:
    """``y = sum_j b_j t^(sigma_j-1)/Gamma(sigma_j) + J^{sigma_k} psi``."""
    sig = _sigmas(sp)
    k = sp.orders.k
    t = sp.grid.nodes
    b = np.asarray(sp.bvals, dtype=float)
    q = singular_exponent(sp)
    y = frac_integral(psi, sig[k], power=min(q, psi.weight) if psi.weight > 0 else None)
    vals = np.array(y.values[:, 0])
    weight = y.weight
    for j in range(1, k + 1):
        if b[j - 1] == 0.0:
            continue
        e = sig[j] - 1.0
        if e < 0:
            weight = max(weight, -e)
        with np.errstate(divide="ignore"):
            vals += b[j - 1] * t ** e / gamma_fn(sig[j])
    if weight > 0:
        vals[0] = np.nan
    return GridFn(sp.grid, vals, weight)


def solve_sequential(sp: SequentialProblem, gamma: float | None = None, tol: float = 1e-12,
                     max_iter: int = 2000) -> tuple[GridFn, GridFn]:
    """Solve for ``psi = D^{sigma_k} y`` and return ``(psi, y)``."""
    p = reduce_to_abel(sp, gamma)
    psi = solve_second_kind(p, tol=tol, max_iter=max_iter)
    return psi, reconstruct(sp, psi)
