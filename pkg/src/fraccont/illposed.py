"""Closed-form witnesses of instability with respect to the fractional order.

Both examples live on the Fourier side, where data are indicator functions
of short intervals far out in frequency, so every norm is an elementary
integral.  Large quantities are carried as logarithms.

* Abel operator on the half line: ``u_hat = (i tau)^alpha f_hat`` with
  ``f_hat`` the (symmetrised) indicator of ``(a_n, a_n + delta_n)``,
  ``a_n = n^n`` and ``alpha_n = delta_n = 1/n``.
* Exponential multiplier: ``u_hat = exp(a tau^alpha) f_hat`` with
  ``f_hat = n 1_(n^n, n^n + n^-3)`` and order perturbation ``1/n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fraccont.errors import IndexTooSmall, ValidationError
from fraccont.fracgrid import write_csv


def _exp(x: float) -> float:
    # saturate instead of raising: the bounds are meant to blow up
    return math.exp(x) if x < 709.0 else math.inf


@dataclass(frozen=True)
class InstabilityWitness:
    """One member of a data sequence.  Squared norms are stored; the lower
    bound is also kept as a logarithm since it grows without limit."""

    n: int
    order_perturbation: float
    data_norm_sq: float
    log_solution_lower_sq: float
    solution_exact_sq: float | None = None
    combined_distance: float | None = None
    true_data_norm: float | None = None

    def __post_init__(self) -> None:
        if self.data_norm_sq < 0 or (self.solution_exact_sq is not None
                                     and self.solution_exact_sq < 0):
            raise ValidationError("norms must be non-negative", key="data_norm")

    @property
    def data_norm(self) -> float:
        return math.sqrt(self.data_norm_sq)

    @property
    def solution_lower_sq(self) -> float:
        return _exp(self.log_solution_lower_sq)

    @property
    def solution_norm_lower(self) -> float:
        return _exp(0.5 * self.log_solution_lower_sq)

    @property
    def solution_norm_exact(self) -> float | None:
        return None if self.solution_exact_sq is None else math.sqrt(self.solution_exact_sq)


def _check_index(n: int) -> None:
    if n < 2:
        raise IndexTooSmall(f"n must be at least 2, got {n}", key="n")


def abel_halfline_instability(n: int) -> InstabilityWitness:
    """``||f_n||^2 = delta_n / pi = 1/(n pi)`` while
    ``||u_n||^2 >= a_n^(2 alpha_n) delta_n / pi = n / pi``.

    The exact value ``(1/pi) int_{a_n}^{a_n+delta_n} tau^(2 alpha_n) dtau`` is
    the lower bound times ``expm1(q log1p(r)) / (q r)`` with
    ``q = 2 alpha_n + 1`` and ``r = delta_n / a_n``; that factor is at least
    1 by convexity and is clamped there against rounding.
    """
    _check_index(n)
    alpha = 1.0 / n
    delta = 1.0 / n
    log_a = n * math.log(n)
    # a_n^(2 alpha_n) = exp(2 log n)
    log_lower = 2.0 * math.log(n) + math.log(delta) - math.log(math.pi)
    q = 2.0 * alpha + 1.0
    r = math.exp(math.log(delta) - log_a)
    factor = max(1.0, math.expm1(q * math.log1p(r)) / (q * r))
    log_exact = log_lower + math.log(factor)
    return InstabilityWitness(n=n, order_perturbation=alpha, data_norm_sq=delta / math.pi,
                              log_solution_lower_sq=log_lower,
                              solution_exact_sq=math.exp(log_exact),
                              combined_distance=alpha + math.sqrt(delta / math.pi),
                              true_data_norm=math.sqrt(delta / math.pi))


def exp_multiplier_instability(n: int, a: float = 1.0, alpha: float = 0.5) -> InstabilityWitness:
    """Witness for ``u_hat = exp(a tau^alpha) f_hat``.

    Follows the customary bookkeeping in which ``int |f_hat_n|^2 = 1/n`` is
    used as the data norm, so ``data_norm = 1/n`` and the combined distance
    is ``eps_n + 1/n = 2/n``; the lower bound is ``||u||^2 >= e^(2an)/n``.
    ``true_data_norm`` is the actual ``L^2`` norm ``1/sqrt(n)``.
    """
    _check_index(n)
    if not a > 0:
        raise ValidationError(f"a must be positive, got {a}", key="a")
    if not alpha > 0:
        raise ValidationError(f"alpha must be positive, got {alpha}", key="alpha")
    eps = 1.0 / n
    dn = 1.0 / n
    return InstabilityWitness(n=n, order_perturbation=eps, data_norm_sq=dn * dn,
                              log_solution_lower_sq=2.0 * a * n - math.log(n),
                              combined_distance=eps + dn,
                              true_data_norm=1.0 / math.sqrt(n))


def witness_table(witnesses: list[InstabilityWitness]) -> np.ndarray:
    """Rows ``n, data_norm, solution_lower, solution_exact, combined_distance``
    (missing entries as NaN)."""
    nan = float("nan")
    return np.array([[w.n, w.data_norm, w.solution_norm_lower,
                      nan if w.solution_exact_sq is None else w.solution_norm_exact,
                      nan if w.combined_distance is None else w.combined_distance]
                     for w in witnesses], dtype=float)


def witnesses_to_csv(path_or_buf, witnesses: list[InstabilityWitness]) -> str | None:
    return write_csv(path_or_buf,
                     ["n", "data_norm", "solution_lower", "solution_exact", "combined_distance"],
                     witness_table(witnesses))
