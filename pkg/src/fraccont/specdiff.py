r"""Time-fractional diffusion through an eigen-expansion.

For a self-adjoint operator :math:`A\phi_p = \lambda_p\phi_p` with positive
spectrum the problem :math:`\partial_t^\alpha v + A^\beta v = f`,
:math:`v(0) = \theta` decouples into the modes

.. math::

    v_p(t) = \theta_p E_{\alpha,1}(-\lambda_p^\beta t^\alpha), \qquad
    w_p(t) = \int_0^t f_p(\tau)(t-\tau)^{\alpha-1}
        E_{\alpha,\alpha}(-\lambda_p^\beta (t-\tau)^\alpha)\,d\tau.

Norms are taken in coefficient space,
:math:`\|v\|_{H^s}^2 = \sum_p \lambda_p^{2s} v_p^2`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

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
from fraccont.fracgrid import TimeGrid, ml_convolve, read_csv, write_csv
from fraccont.mlf import mittag_leffler

DEFAULT_MODES = 64


@dataclass(frozen=True)
class SpectralOperator:
    """Truncated spectrum ``lambda_1 <= ... <= lambda_P``, all positive."""

    lambdas: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        lam = np.asarray(self.lambdas, dtype=float).ravel()
        if lam.size == 0:
            raise ValidationError("need at least one eigenvalue", key="lambdas")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise ValidationError("eigenvalues must be finite and positive", key="lambdas")
        if np.any(np.diff(lam) < 0):
            raise BadOrdering("eigenvalues must be nondecreasing", key="lambdas")
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)

    @property
    def P(self) -> int:
        return self.lambdas.size

    def power(self, beta: float) -> np.ndarray:
        """``lambda_p^beta`` as ``exp(beta log lambda_p)``."""
        return np.exp(beta * np.log(self.lambdas))


@dataclass(frozen=True)
class ModeVector:
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=float).ravel()
        if not np.all(np.isfinite(c)):
            raise ValidationError("mode coefficients must be finite", key="coeffs")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def P(self) -> int:
        return self.coeffs.size

    @classmethod
    def unit(cls, P: int, p: int = 1) -> "ModeVector":
        """The coefficient vector of ``phi_p`` (1-based)."""
        c = np.zeros(P)
        c[p - 1] = 1.0
        return cls(c)

    @classmethod
    def power_decay(cls, P: int, q: float) -> "ModeVector":
        """Coefficients ``p^-q``."""
        return cls(np.arange(1, P + 1, dtype=float) ** (-q))


@dataclass(frozen=True)
class ModeTrajectory:
    """Mode coefficients at every grid node; ``frames`` has shape ``(N + 1, P)``."""

    grid: TimeGrid
    frames: np.ndarray

    def __post_init__(self) -> None:
        F = np.asarray(self.frames, dtype=float)
        if F.ndim != 2 or F.shape[0] != self.grid.N + 1:
            raise GridMismatch(
                f"frames of shape {F.shape} do not match a grid with {self.grid.N + 1} nodes",
                key="frames")
        F.setflags(write=False)
        object.__setattr__(self, "frames", F)

    @property
    def P(self) -> int:
        return self.frames.shape[1]

    def frame(self, n: int) -> ModeVector:
        return ModeVector(self.frames[n])

    def hs_norms(self, op: SpectralOperator, s: float) -> np.ndarray:
        """``||v(t_n)||_{H^s}`` at every node."""
        _check_s(s)
        _check_length(self.P, op.P)
        w = op.power(2.0 * s)
        return np.sqrt(self.frames**2 @ w)

    def __sub__(self, other: "ModeTrajectory") -> "ModeTrajectory":
        if self.grid != other.grid or self.P != other.P:
            raise GridMismatch("trajectories live on different grids or truncations", key="grid")
        return ModeTrajectory(self.grid, self.frames - other.frames)

    def to_csv(self, path_or_buf) -> None:
        header = ["t"] + [f"c{p}" for p in range(1, self.P + 1)]
        write_csv(path_or_buf, header, np.column_stack([self.grid.nodes, self.frames]))

    @classmethod
    def from_csv(cls, path_or_buf) -> "ModeTrajectory":
        _, data = read_csv(path_or_buf)
        return cls(TimeGrid(data[:, 0]), data[:, 1:])

    def physical(self, L: float, x: np.ndarray) -> np.ndarray:
        """Samples of ``sum_p c_p sqrt(2/L) sin(p pi x / L)``, shape ``(N + 1, len(x))``."""
        x = np.asarray(x, dtype=float)
        p = np.arange(1, self.P + 1)
        basis = math.sqrt(2.0 / L) * np.sin(np.outer(p, x) * math.pi / L)
        return self.frames @ basis

    def physical_to_csv(self, path_or_buf, L: float, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=float)
        u = self.physical(L, x)
        tt, xx = np.meshgrid(self.grid.nodes, x, indexing="ij")
        write_csv(path_or_buf, ["t", "x", "u"], np.column_stack([tt.ravel(), xx.ravel(), u.ravel()]))


def _check_s(s: float) -> None:
    if not s >= 0:
        raise NegativeS(f"s must be non-negative, got {s}", key="s")


def _check_length(a: int, b: int) -> None:
    if a != b:
        raise LengthMismatch(f"{a} coefficients against {b} eigenvalues", key="coeffs")


def _check_orders(alpha: float, beta: float, beta_range: tuple[float, float] | None) -> None:
    if not 0.0 < alpha <= 1.0:
        raise AlphaOutOfRange(f"alpha must lie in (0, 1], got {alpha}", key="alpha")
    b0, b1 = (beta, beta) if beta_range is None else beta_range
    if not (0.0 < b0 <= beta <= b1 and math.isfinite(b1)):
        raise BetaOutOfRange(f"beta={beta} must satisfy 0 < beta0 <= beta <= beta1", key="beta")


def dirichlet_laplacian_1d(L: float, P: int = DEFAULT_MODES) -> SpectralOperator:
    """``-d^2/dx^2`` on ``(0, L)`` with Dirichlet ends: ``lambda_n = (n pi / L)^2``."""
    if not L > 0:
        raise NonPositiveLength(f"L must be positive, got {L}", key="L")
    if P < 1:
        raise ValidationError(f"P must be at least 1, got {P}", key="P")
    n = np.arange(1, P + 1, dtype=float)
    return SpectralOperator((n * math.pi / L) ** 2, label=f"dirichlet-1d L={L:g}")


def hs_norm(v: ModeVector, op: SpectralOperator, s: float) -> float:
    _check_s(s)
    _check_length(v.P, op.P)
    return float(math.sqrt(float(v.coeffs**2 @ op.power(2.0 * s))))


def hs_tail(coeff: Callable[[np.ndarray], np.ndarray], L: float, P: int, s: float,
            terms: int = 1_000_000) -> float:
    """Truncation error ``sqrt(sum_{P < p <= P + terms} lambda_p^{2s} c_p^2)`` for
    the Dirichlet Laplacian on ``(0, L)`` and coefficients ``c_p = coeff(p)``."""
    _check_s(s)
    p = np.arange(P + 1, P + terms + 1, dtype=float)
    lam = (p * math.pi / L) ** 2
    c = np.asarray(coeff(p), dtype=float)
    return float(math.sqrt(float(np.sum(lam ** (2.0 * s) * c**2))))


def solve_homogeneous(theta: ModeVector, op: SpectralOperator, alpha: float, beta: float,
                      grid: TimeGrid, beta_range: tuple[float, float] | None = None
                      ) -> ModeTrajectory:
    """``v_p(t) = theta_p E_{alpha,1}(-lambda_p^beta t^alpha)``."""
    _check_orders(alpha, beta, beta_range)
    _check_length(theta.P, op.P)
    z = -np.outer(grid.nodes**alpha, op.power(beta))
    E = mittag_leffler(alpha, 1.0, z)
    return ModeTrajectory(grid, E * theta.coeffs[None, :])


def solve_forced(fmodes: ModeTrajectory, op: SpectralOperator, alpha: float, beta: float,
                 beta_range: tuple[float, float] | None = None) -> ModeTrajectory:
    """Mode-wise product integration of the ``E_{alpha,alpha}`` kernel
    against piecewise-linear forcing coefficients."""
    _check_orders(alpha, beta, beta_range)
    if fmodes.P != op.P:
        raise GridMismatch(f"{fmodes.P} forcing modes against {op.P} eigenvalues", key="fmodes")
    out = ml_convolve(fmodes.grid, alpha, -op.power(beta), fmodes.frames)
    out[0] = 0.0
    return ModeTrajectory(fmodes.grid, out)


def l2_time_norm(traj: ModeTrajectory, op: SpectralOperator, r: float) -> float:
    """Trapezoidal ``||f||_{L^2(0,T; H^r)}``."""
    n2 = traj.hs_norms(op, r) ** 2
    return float(math.sqrt(float(np.sum(0.5 * (n2[1:] + n2[:-1]) * traj.grid.steps))))


def predicted_exponent(s: float, rho: float, beta1: float) -> float:
    """Order-continuity exponent ``min(1, (s - rho) / beta1)`` for the homogeneous problem."""
    if not (s > rho >= 0):
        raise BadOrdering(f"need s > rho >= 0, got s={s}, rho={rho}", key="s")
    if not beta1 > 0:
        raise BadOrdering(f"beta1 must be positive, got {beta1}", key="beta1")
    return min(1.0, (s - rho) / beta1)


def forced_exponent(beta0: float, rho: float, beta1: float, delta: float) -> float:
    """Continuity exponent ``(beta0 - rho) / (beta0 + beta1 + delta)`` of the forced problem."""
    if not (0 <= rho < beta0 <= beta1):
        raise BadOrdering(f"need 0 <= rho < beta0 <= beta1, got {rho}, {beta0}, {beta1}",
                          key="rho")
    if not delta > 0:
        raise BadOrdering(f"delta must be positive, got {delta}", key="delta")
    return (beta0 - rho) / (beta0 + beta1 + delta)
