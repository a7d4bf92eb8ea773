"""Order-continuity experiments.

A sweep solves a base problem at order ``alpha`` and perturbed problems at
``alpha + h_m`` with ``h_m = h0 2^-m``, measures the discrepancy in a chosen
norm and fits ``log d = slope log h + log C`` by least squares.  Monte Carlo
runs replace the dyadic perturbations by random orders and compare the mean
discrepancy with the calibrated moment bound ``C (E|a - alpha|^lam)^(nu/lam)``.
"""

from __future__ import annotations

import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gamma as gamma_fn

from fraccont.abel import relaxation_problem, solve_second_kind
from fraccont.errors import (
    AlphaOutOfRange,
    DegenerateFit,
    FracContError,
    SolverFailure,
    ValidationError,
)
from fraccont.fracgrid import (
    GridFn,
    SequentialOrders,
    TimeGrid,
    format_float,
    ml_convolve,
    read_csv,
    write_csv,
)
from fraccont.mlf import mittag_leffler
from fraccont.seqfde import SequentialProblem, solve_sequential
from fraccont.specdiff import (
    ModeTrajectory,
    ModeVector,
    SpectralOperator,
    dirichlet_laplacian_1d,
    forced_exponent,
    predicted_exponent,
    solve_forced,
    solve_homogeneous,
)

TARGETS = ("abel", "seqfde", "spectral", "spectral-forced")
NORMS = ("sup", "lp", "hs")
SAMPLERS = ("uniform", "two-point", "point")
SLOPE_TOL = 0.1
MC_SLACK = 1.5
DEGENERATE = 1e-14


def thread_count() -> int:
    """Worker cap from ``FRACCONT_THREADS`` (0 or unset: up to 4)."""
    raw = os.environ.get("FRACCONT_THREADS", "").strip()
    n = int(raw) if raw else 0
    if n < 0:
        raise ValidationError(f"FRACCONT_THREADS must be >= 0, got {n}", key="FRACCONT_THREADS")
    return n if n > 0 else min(4, os.cpu_count() or 1)


def _ordered_map(fn: Callable, items: list) -> list:
    """``map`` over a thread pool; results come back in input order."""
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# {{{ configuration and reports

@dataclass(frozen=True)
class SweepConfig:
    """One continuity experiment.

    ``target`` picks the solver:

    * ``abel``: ``u = 1 + lam J^alpha u`` on ``N`` uniform steps, norm ``C_gamma``.
    * ``seqfde``: ``D^alpha y - lam y = 0``, ``D^(alpha-1) y(0) = 1``; the
      discrepancy of ``psi = D^alpha y`` in ``C_gamma`` (default gamma
      ``1 - alpha/2``).
    * ``spectral``: homogeneous diffusion with ``theta``, discrepancy
      ``sup_t ||.||_{H^rho}``.
    * ``spectral-forced``: zero initial data, forcing constant in time with
      modes ``theta``.

    ``theta`` is ``"e1"`` (first eigenfunction) or ``"decay"``
    (``theta_p = p^-(2s + 0.51)``, just inside ``H^s``).  Spectral targets use
    the Dirichlet Laplacian on ``(0, L)`` with ``P`` modes, or the single
    eigenvalue ``lambda_1 = 1`` when ``P == 1`` and ``theta == "e1"``.
    """

    target: str = "spectral"
    alpha: float = 0.5
    h0: float = 0.1
    levels: int = 6
    norm: str | None = None
    s: float = 1.0
    rho: float = 0.0
    beta: float = 1.0
    lam: float = -1.0
    gamma: float | None = None
    p: float = 2.0
    T: float = 1.0
    N: int = 256
    P: int = 64
    L: float = math.pi
    theta: str = "decay"
    delta: float = 0.01
    alpha0: float | None = None
    alpha1: float | None = None

    def __post_init__(self) -> None:
        if self.target not in TARGETS:
            raise ValidationError(f"target must be one of {TARGETS}, got {self.target!r}",
                                  key="target")
        if self.norm is not None and self.norm not in NORMS:
            raise ValidationError(f"norm must be one of {NORMS}, got {self.norm!r}", key="norm")
        if self.theta not in ("e1", "decay"):
            raise ValidationError(f"theta must be 'e1' or 'decay', got {self.theta!r}", key="theta")
        if self.levels < 1:
            raise ValidationError(f"levels must be >= 1, got {self.levels}", key="levels")
        if not self.h0 > 0:
            raise ValidationError(f"h0 must be positive, got {self.h0}", key="h0")
        if self.N < 2 or self.P < 1:
            raise ValidationError("need N >= 2 and P >= 1", key="N")
        lo, hi = self.order_range
        if not (0 < lo <= self.alpha and self.alpha + self.h0 <= hi):
            raise AlphaOutOfRange(
                f"alpha={self.alpha} and alpha+h0={self.alpha + self.h0} must lie in "
                f"[{lo:g}, {hi:g}]", key="h0")
        if self.target == "spectral" and not self.s > self.rho:
            raise ValidationError(f"need s > rho, got s={self.s}, rho={self.rho}", key="rho")
        g = self.resolved_gamma
        if not 0 <= g < 1:
            raise ValidationError(f"gamma must lie in [0, 1), got {g}", key="gamma")

    @property
    def order_range(self) -> tuple[float, float]:
        lo = self.alpha if self.alpha0 is None else self.alpha0
        top = 1.0 if self.target.startswith("spectral") else 1.0 - 1e-12
        hi = top if self.alpha1 is None else self.alpha1
        return lo, hi

    @property
    def resolved_norm(self) -> str:
        if self.norm is not None:
            return self.norm
        return "hs" if self.target.startswith("spectral") else "sup"

    @property
    def resolved_gamma(self) -> float:
        if self.gamma is not None:
            return float(self.gamma)
        if self.target == "seqfde":
            return 1.0 - 0.5 * self.order_range[0]
        return 0.0

    def steps(self) -> np.ndarray:
        return self.h0 * 2.0 ** -np.arange(self.levels + 1, dtype=float)

    def predicted(self) -> float:
        if self.target == "spectral":
            return predicted_exponent(self.s, self.rho, self.beta)
        if self.target == "spectral-forced":
            return forced_exponent(self.beta, self.rho, self.beta, self.delta)
        return 1.0

    def envelope(self) -> float | None:
        """Theoretical Abel constant ``E^2_{alpha0,1-gamma}(kappa Gamma(alpha1) max T^a)``
        (reported, not asserted)."""
        if self.target != "abel":
            return None
        a0, a1 = self.order_range
        g = self.resolved_gamma
        # kappa = |lam| / Gamma(alpha0) bounds the relaxation kernel on [alpha0, alpha1]
        x = abs(self.lam) / gamma_fn(a0) * gamma_fn(a1) * max(self.T**a0, self.T**a1)
        return float(mittag_leffler(a0, 1.0 - g, x)) ** 2


@dataclass(frozen=True)
class RandomOrderConfig:
    """Random orders ``a_n`` for Monte Carlo runs.

    ``uniform`` draws from ``[low, high]``, ``two-point`` picks ``low`` or
    ``high`` with equal probability and ``point`` always returns ``low``.
    Trial ``i`` uses a PCG64 stream seeded by child ``i`` of
    ``SeedSequence(seed)``.
    """

    sampler: str = "uniform"
    low: float = 0.45
    high: float = 0.55
    trials: int = 64
    lambda_moment: float = 2.0
    nu: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sampler not in SAMPLERS:
            raise ValidationError(f"sampler must be one of {SAMPLERS}, got {self.sampler!r}",
                                  key="sampler")
        if self.sampler != "point" and not self.low <= self.high:
            raise ValidationError(f"need low <= high, got {self.low}, {self.high}", key="low")
        if self.trials < 16:
            raise ValidationError(f"need at least 16 trials, got {self.trials}", key="trials")
        if not self.nu > 0 or not self.lambda_moment >= self.nu:
            raise ValidationError(
                f"need lambda_moment >= nu > 0, got {self.lambda_moment}, {self.nu}",
                key="lambda_moment")

    def support(self) -> tuple[float, float]:
        return (self.low, self.low) if self.sampler == "point" else (self.low, self.high)

    def draw(self) -> np.ndarray:
        children = np.random.SeedSequence(self.seed).spawn(self.trials)
        out = np.empty(self.trials)
        for i, child in enumerate(children):
            rng = np.random.Generator(np.random.PCG64(child))
            if self.sampler == "uniform":
                out[i] = rng.uniform(self.low, self.high)
            elif self.sampler == "two-point":
                out[i] = self.low if rng.random() < 0.5 else self.high
            else:
                out[i] = self.low
        return out


@dataclass(frozen=True)
class ContinuityReport:
    """Rows ``(h, discrepancy)`` with the fitted slope and constant.

    Monte Carlo reports also carry the mean discrepancy and the sample
    moment; their rows hold ``|a_n - alpha|`` per trial.
    """

    rows: np.ndarray
    slope: float
    predicted: float
    verdict: bool
    fitted_constant: float
    envelope: float | None = None
    mean: float | None = None
    moment: float | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        r = np.asarray(self.rows, dtype=float)
        if r.ndim != 2 or r.shape[0] == 0 or r.shape[1] != 2:
            raise ValidationError("report needs a nonempty (h, discrepancy) table", key="rows")
        if np.any(r[:, 1] < 0):
            raise ValidationError("discrepancies must be non-negative", key="rows")
        object.__setattr__(self, "rows", r)

    def footer(self) -> list[str]:
        items = [("slope", self.slope), ("predicted", self.predicted),
                 ("constant", self.fitted_constant)]
        if self.envelope is not None:
            items.append(("envelope", self.envelope))
        if self.mean is not None:
            items += [("mean", self.mean), ("moment", self.moment)]
        text = ",".join(f"{k}={format_float(v)}" for k, v in items)
        return [text + f",verdict={'pass' if self.verdict else 'fail'}"]

    def to_csv(self, path_or_buf=None) -> str | None:
        return write_csv(path_or_buf, ["h", "discrepancy"], self.rows, footer=self.footer())

    @classmethod
    def from_csv(cls, path_or_buf) -> "ContinuityReport":
        if hasattr(path_or_buf, "read"):
            text = path_or_buf.read()
        else:
            with open(path_or_buf, encoding="utf-8") as fh:
                text = fh.read()
        _, data = read_csv(io.StringIO(text))
        foot = [ln for ln in text.splitlines() if "=" in ln][-1]
        kv = dict(item.split("=", 1) for item in foot.split(","))
        num = {k: float(v) for k, v in kv.items() if k != "verdict"}
        return cls(rows=data, slope=num["slope"], predicted=num["predicted"],
                   verdict=kv["verdict"] == "pass", fitted_constant=num["constant"],
                   envelope=num.get("envelope"), mean=num.get("mean"),
                   moment=num.get("moment"))


# }}}


# {{{ targets

class _Target:
    """Solver and norm for one configuration; ``solve(alpha)`` returns an
    opaque solution and ``distance(a, b)`` the configured norm."""

    def __init__(self, cfg: SweepConfig):
        self.cfg = cfg
        t = cfg.target
        if t.startswith("spectral"):
            if cfg.theta == "e1" and cfg.P == 1:
                self.op = SpectralOperator(np.array([1.0]), label="lambda_1 = 1")
            else:
                self.op = dirichlet_laplacian_1d(cfg.L, cfg.P)
            P = self.op.P
            self.theta = (ModeVector.unit(P) if cfg.theta == "e1"
                          else ModeVector.power_decay(P, 2.0 * cfg.s + 0.51))
            self.grid = TimeGrid.uniform(cfg.T, min(cfg.N, 100))
        else:
            self.grid = TimeGrid.uniform(cfg.T, cfg.N)

    def solve(self, alpha: float):
        cfg = self.cfg
        if cfg.target == "abel":
            return solve_second_kind(relaxation_problem(cfg.lam, alpha, self.grid))
        if cfg.target == "seqfde":
            mu = -cfg.lam
            sp = SequentialProblem(SequentialOrders((alpha,)), [lambda t: np.full_like(t, mu)],
                                   GridFn.constant(self.grid, 0.0), [1.0],
                                   eta0=min(alpha, cfg.order_range[0]))
            psi, _ = solve_sequential(sp, gamma=cfg.resolved_gamma)
            return psi
        if cfg.target == "spectral":
            return solve_homogeneous(self.theta, self.op, alpha, cfg.beta, self.grid)
        f = ModeTrajectory(self.grid, np.tile(self.theta.coeffs, (self.grid.N + 1, 1)))
        return solve_forced(f, self.op, alpha, cfg.beta)

    def distance(self, a, b) -> float:
        cfg = self.cfg
        norm = cfg.resolved_norm
        if isinstance(a, ModeTrajectory):
            d = a - b
            n = d.hs_norms(self.op, cfg.rho if norm == "hs" else 0.0)
            if norm == "lp":
                return float(np.trapezoid(n**cfg.p, self.grid.nodes) ** (1.0 / cfg.p))
            return float(np.max(n))
        d = a - b
        if norm == "lp":
            return d.lp_norm(cfg.p)
        g = cfg.resolved_gamma
        if g > 0:
            return d.weighted_sup(g)
        return float(np.max(d.pointwise_norm()))


def _solve_guarded(target: _Target, alpha: float, h: float | None):
    try:
        return target.solve(alpha)
    except FracContError as err:
        raise SolverFailure(f"solver failed at alpha={alpha:.17g}: {err}", h=h, cause=err) from err


def fit_slope(h: np.ndarray, d: np.ndarray) -> tuple[float, float]:
    """Least-squares ``log d = slope log h + c`` over rows with ``d > 0``;
    returns ``(slope, exp(c))``."""
    keep = d > 0
    if np.count_nonzero(d >= DEGENERATE) == 0 or np.count_nonzero(keep) < 2:
        raise DegenerateFit("all discrepancies are below 1e-14")
    x, y = np.log(h[keep]), np.log(d[keep])
    slope, c = np.polyfit(x, y, 1)
    return float(slope), float(math.exp(c))


# }}}


def sweep_orders(cfg: SweepConfig) -> ContinuityReport:
    """Dyadic order sweep ``alpha + h0 2^-m``, ``m = 0..levels``."""
    target = _Target(cfg)
    base = _solve_guarded(target, cfg.alpha, None)
    hs = cfg.steps()

    def one(h: float) -> float:
        return target.distance(_solve_guarded(target, cfg.alpha + h, h), base)

    d = np.array(_ordered_map(one, list(hs)))
    slope, C = fit_slope(hs, d)
    pred = cfg.predicted()
    monotone = bool(np.all(np.diff(d) <= 0))
    verdict = slope >= pred - SLOPE_TOL and monotone
    return ContinuityReport(rows=np.column_stack([hs, d]), slope=slope, predicted=pred,
                            verdict=bool(verdict), fitted_constant=C, envelope=cfg.envelope())


def sample_moment(a: np.ndarray, alpha: float, lam: float, nu: float) -> float:
    """``(mean |a - alpha|^lam)^(nu / lam)``."""
    return float(np.mean(np.abs(a - alpha) ** lam) ** (nu / lam))


def monte_carlo_orders(rcfg: RandomOrderConfig, sweep: SweepConfig,
                       calibration: ContinuityReport | None = None) -> ContinuityReport:
    """Mean discrepancy over random orders against the calibrated moment bound.

    The constant comes from ``calibration`` (a sweep report), computed with
    :func:`sweep_orders` when not given.
    """
    lo, hi = rcfg.support()
    a0 = 0.0 if sweep.alpha0 is None else sweep.alpha0
    a1 = sweep.order_range[1]
    if lo < a0 or hi > a1 or lo <= 0:
        raise AlphaOutOfRange(f"sampler support [{lo}, {hi}] leaves [{a0}, {a1}]", key="low")
    if calibration is None:
        calibration = sweep_orders(sweep)
    target = _Target(sweep)
    base = _solve_guarded(target, sweep.alpha, None)
    a = rcfg.draw()

    def one(x: float) -> float:
        if x == sweep.alpha:
            return 0.0
        return target.distance(_solve_guarded(target, x, abs(x - sweep.alpha)), base)

    d = np.array(_ordered_map(one, list(a)))
    mean = float(np.mean(d))
    moment = sample_moment(a, sweep.alpha, rcfg.lambda_moment, rcfg.nu)
    C = calibration.fitted_constant
    verdict = mean <= C * moment * MC_SLACK
    return ContinuityReport(rows=np.column_stack([np.abs(a - sweep.alpha), d]),
                            slope=calibration.slope, predicted=calibration.predicted,
                            verdict=bool(verdict), fitted_constant=C, envelope=calibration.envelope,
                            mean=mean, moment=moment)


def convolution_continuity(f: GridFn, alpha: float, alphaP: float, lam: float,
                           lamP: float) -> tuple[float, float]:
    """L^2 distance of ``G = int (t-s)^(a-1) E_{a,a}(lam (t-s)^a) f(s) ds`` between
    ``(alpha, lam)`` and ``(alphaP, lamP)``, and its ratio to
    ``[|alphaP - alpha|(1 + |lam|) + |lamP - lam|] ||f||_2``."""
    for key, a in (("alpha", alpha), ("alphaP", alphaP)):
        if not 0.0 < a < 1.0:
            raise AlphaOutOfRange(f"{key} must lie in (0, 1), got {a}", key=key)
    for key, x in (("lambda", lam), ("lambdaP", lamP)):
        if not x < 0:
            raise ValidationError(f"{key} must be negative, got {x}", key=key)
    if f.weight > 0 or f.dim != 1:
        raise ValidationError("need scalar unweighted forcing", key="f")
    v = f.values[:, 0]
    G1 = ml_convolve(f.grid, alpha, lam, v)
    G2 = ml_convolve(f.grid, alphaP, lamP, v)
    lhs = float(math.sqrt(np.trapezoid((G2 - G1) ** 2, f.t)))
    scale = (abs(alphaP - alpha) * (1.0 + abs(lam)) + abs(lamP - lam)) * f.lp_norm(2.0)
    if scale == 0.0:
        return lhs, 0.0 if lhs == 0.0 else math.inf
    return lhs, lhs / scale


def relaxation_gap(alpha: float, alphaP: float, grid: TimeGrid) -> float:
    """L^2 distance of ``1 - E_{a,1}(-t^a)`` at the two orders (closed form of the
    convolution with ``f = 1``, ``lam = -1``)."""
    t = grid.nodes
    G1 = 1.0 - mittag_leffler(alpha, 1.0, -(t**alpha))
    G2 = 1.0 - mittag_leffler(alphaP, 1.0, -(t**alphaP))
    return float(math.sqrt(np.trapezoid((G2 - G1) ** 2, t)))


__all__ = [
    "ContinuityReport",
    "RandomOrderConfig",
    "SweepConfig",
    "convolution_continuity",
    "fit_slope",
    "monte_carlo_orders",
    "relaxation_gap",
    "sample_moment",
    "sweep_orders",
    "thread_count",
]
