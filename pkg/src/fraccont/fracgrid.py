r"""Time grids, grid functions and discrete fractional operators.

The Riemann-Liouville integral

.. math::

    J^\alpha f(t) = \frac{1}{\Gamma(\alpha)} \int_0^t (t-s)^{\alpha-1} f(s)\,ds

is discretised by product integration: ``f`` is linearly interpolated on each
cell and the weight :math:`(t-s)^{\alpha-1}` is integrated exactly.  Data in a
weighted space :math:`C_\gamma` (``weight > 0``) carry no value at ``t = 0``;
on the first cell they are fitted by :math:`a s^{-p} + c` through the values
at ``t_1`` and ``t_2``, which is exact for both a pure power and a constant
(a straight line when ``p = 0``).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import beta as beta_fn
from scipy.special import betainc, gamma

from fraccont.errors import (
    AlphaOutOfRange,
    CompositionBlowup,
    GridMismatch,
    MissingInitialValue,
    NonPositiveAlpha,
    ValidationError,
)
from fraccont.mlf import mittag_leffler


# {{{ data types

@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing mesh ``0 = t_0 < t_1 < ... < t_N = T``."""

    nodes: np.ndarray

    def __post_init__(self) -> None:
        t = np.array(self.nodes, dtype=float)
        if t.ndim != 1 or t.size < 3:
            raise ValidationError("a grid needs at least 3 nodes (N >= 2)", key="nodes")
        if t[0] != 0.0:
            raise ValidationError("grid must start at t = 0", key="nodes")
        if not np.all(np.diff(t) > 0):
            raise ValidationError("grid nodes must be strictly increasing", key="nodes")
        t.setflags(write=False)
        object.__setattr__(self, "nodes", t)

    @classmethod
    def uniform(cls, T: float, N: int) -> "TimeGrid":
        if not T > 0:
            raise ValidationError(f"horizon T must be positive, got {T}", key="T")
        return cls(np.linspace(0.0, T, N + 1))

    @classmethod
    def graded(cls, T: float, N: int, r: float) -> "TimeGrid":
        """Nodes ``T (n/N)^r``, clustered at 0 for ``r > 1``."""
        if not T > 0:
            raise ValidationError(f"horizon T must be positive, got {T}", key="T")
        if not r >= 1:
            raise ValidationError(f"grading exponent must be >= 1, got {r}", key="r")
        return cls(T * np.linspace(0.0, 1.0, N + 1) ** r)

    @classmethod
    def graded_for(cls, T: float, N: int, alpha: float) -> "TimeGrid":
        """Grading ``r = max(1, 1/alpha)``: solutions behaving like
        ``c0 + c1 t^alpha`` become linear in the node index near 0."""
        return cls.graded(T, N, max(1.0, 1.0 / alpha))

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @property
    def N(self) -> int:
        return self.nodes.size - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def is_uniform(self) -> bool:
        h = self.steps
        return bool(np.all(np.abs(h - h[0]) <= 1e-12 * h[0]))

    def key(self) -> bytes:
        return self.nodes.tobytes()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return self is other or (self.nodes.shape == other.nodes.shape
                                 and bool(np.array_equal(self.nodes, other.nodes)))

    def __hash__(self) -> int:
        return hash(self.key())


@dataclass(frozen=True, eq=False)
class GridFn:
    """Vector-valued samples on a grid, shape ``(N + 1, d)``.

    ``weight`` is the exponent of the :math:`C_\\gamma` space the data live in.
    When it is positive the value at ``t_0`` is ignored (stored as NaN).
    """

    grid: TimeGrid
    values: np.ndarray
    weight: float = 0.0

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.grid.N + 1 or v.shape[1] < 1:
            raise GridMismatch(
                f"values of shape {np.shape(self.values)} do not match a grid with "
                f"{self.grid.N + 1} nodes", key="values")
        if not 0.0 <= self.weight < 1.0:
            raise ValidationError(f"weight must lie in [0, 1), got {self.weight}", key="weight")
        if self.weight > 0:
            v[0] = np.nan
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: TimeGrid, f: Callable, weight: float = 0.0) -> "GridFn":
        t = grid.nodes
        if weight > 0:
            vals = np.empty((t.size,) + np.shape(f(t[1:2]))[1:])
            vals[0] = np.nan
            vals[1:] = f(t[1:])
        else:
            vals = f(t)
        return cls(grid, np.broadcast_to(np.asarray(vals, dtype=float), np.shape(vals)), weight)

    @classmethod
    def constant(cls, grid: TimeGrid, c: float | Sequence[float]) -> "GridFn":
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return cls(grid, np.tile(c, (grid.N + 1, 1)))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    def component(self, i: int = 0) -> np.ndarray:
        return self.values[:, i]

    def has_initial_value(self) -> bool:
        return bool(np.all(np.isfinite(self.values[0])))

    def with_values(self, values: np.ndarray, weight: float | None = None) -> "GridFn":
        return GridFn(self.grid, values, self.weight if weight is None else weight)

    def __sub__(self, other: "GridFn") -> "GridFn":
        _same_grid(self, other)
        return GridFn(self.grid, self.values - other.values, max(self.weight, other.weight))

    def __add__(self, other: "GridFn") -> "GridFn":
        _same_grid(self, other)
        return GridFn(self.grid, self.values + other.values, max(self.weight, other.weight))

    # norms on the grid; the value at t_0 is skipped for weighted data

    def pointwise_norm(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=1)

    def weighted_sup(self, gamma: float | None = None) -> float:
        """Grid realisation of ``sup t^gamma |v(t)|`` over interior nodes."""
        g = self.weight if gamma is None else gamma
        t = self.t[1:]
        return float(np.max(t**g * self.pointwise_norm()[1:]))

    def lp_norm(self, p: float) -> float:
        """Trapezoidal :math:`L^p(0,T)` norm (``p = inf`` gives the sup)."""
        v = self.pointwise_norm()
        if math.isinf(p):
            return float(np.max(v[1:] if self.weight > 0 else v))
        if self.weight > 0:
            v = v.copy()
            v[0] = 0.0
        return float(np.trapezoid(v**p, self.t) ** (1.0 / p))

    # CSV

    def to_csv(self, path_or_buf=None) -> str | None:
        return write_csv(path_or_buf, ["t"] + [f"v{i + 1}" for i in range(self.dim)],
                         np.column_stack([self.t, self.values]))

    @classmethod
    def from_csv(cls, path_or_buf, weight: float = 0.0) -> "GridFn":
        header, data = read_csv(path_or_buf)
        if not header or header[0] != "t":
            raise ValidationError("CSV must start with a 't' column", key="header")
        return cls(TimeGrid(data[:, 0]), data[:, 1:], weight)


@dataclass(frozen=True)
class SequentialOrders:
    """Orders ``eta_1..eta_k`` of a sequential derivative and partial sums ``sigma_j``."""

    etas: tuple[float, ...]
    sigmas: tuple[float, ...] = field(init=False)

    def __post_init__(self) -> None:
        etas = tuple(float(e) for e in self.etas)
        if not etas:
            raise ValidationError("need at least one order", key="etas")
        for e in etas:
            if not 0.0 < e <= 1.0:
                raise AlphaOutOfRange(f"each eta must lie in (0, 1], got {e}", key="etas")
        object.__setattr__(self, "etas", etas)
        object.__setattr__(self, "sigmas", tuple(np.cumsum(etas).tolist()))

    @property
    def k(self) -> int:
        return len(self.etas)


def _same_grid(a: GridFn, b: GridFn) -> None:
    if a.grid != b.grid:
        raise GridMismatch("grid functions live on different grids", key="grid")
    if a.dim != b.dim:
        raise GridMismatch("grid functions have different dimensions", key="values")


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(path_or_buf, header: Sequence[str], rows: np.ndarray,
              footer: Sequence[str] = ()) -> str | None:
    """Write rows with 17 significant digits; returns the text if no target given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in np.atleast_2d(rows):
        w.writerow([format_float(x) for x in row])
    for line in footer:
        buf.write(line + "\n")
    text = buf.getvalue()
    if path_or_buf is None:
        return text
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return None


def read_csv(path_or_buf) -> tuple[list[str], np.ndarray]:
    if hasattr(path_or_buf, "read"):
        text = path_or_buf.read()
    else:
        with open(path_or_buf, encoding="utf-8") as fh:
            text = fh.read()
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    header = rows[0]
    body = [r for r in rows[1:] if "=" not in r[0]]
    return header, np.array([[float(x) for x in r] for r in body], dtype=float)


# }}}


# {{{ product integration weights

def _cell_weights(a: np.ndarray, b: np.ndarray, alpha: float):
    """Exact integrals of ``u^(alpha-1)`` against the two hat functions of a
    cell with ``u`` in ``[a, b]``.  Returns (left, right) weights, where
    "right" multiplies the node closer to the evaluation point.

    Written through the regularised incomplete beta function so that far
    cells (``b - a << b``) do not suffer from cancellation.
    """
    h = b - a
    r = h / b
    b1 = b ** (alpha + 1.0) / h
    P = betainc(2.0, alpha, r) / (alpha * (alpha + 1.0))
    with np.errstate(divide="ignore"):
        D1 = -np.expm1(alpha * np.log1p(-np.minimum(r, 1.0)))
    D1 = np.where(r >= 1.0, 1.0, D1)
    right = b1 * P
    left = b1 * (r * D1 / alpha - P)
    return left, right


def _singular_first_cell(t: np.ndarray, alpha: float, p: float) -> tuple[np.ndarray, np.ndarray]:
    """Weights of ``f(t_1)`` and ``f(t_2)`` at each node from the cell
    ``[0, t_1]``.

    The fit ``f(s) ~ a s^(-p) + c`` through ``t_1, t_2`` is exact for both a
    pure power and a constant.  For ``p = 0`` the data are regular and the
    fit is the line through ``t_1, t_2`` instead.  Row 1 therefore gets an
    entry in column 2, the only one above the diagonal.
    """
    t1, t2 = t[1], t[2]
    tn = t[1:]
    w1 = np.zeros_like(t)
    w2 = np.zeros_like(t)
    if p == 0.0:
        # f(s) ~ f_1 + (f_2 - f_1)(s - t_1)/(t_2 - t_1), i.e. the linear
        # rule on [0, t_1] with f_0 extrapolated from f_1 and f_2
        left0, right0 = _cell_weights(tn - t1, tn, alpha)
        d = t1 * left0 / (t2 - t1)
        w1[1:] = left0 + right0 + d
        w2[1:] = -d
        return w1, w2
    x = np.minimum(t1 / tn, 1.0)
    # Ip = int_0^t1 (tn - s)^(alpha-1) s^-p ds, I0 the same with p = 0
    Ip = tn ** (alpha - p) * beta_fn(1.0 - p, alpha) * betainc(1.0 - p, alpha, x)
    I0 = (tn**alpha - (tn - t1) ** alpha) / alpha
    c = (Ip - t1 ** (-p) * I0) / (t1 ** (-p) - t2 ** (-p))
    w1[1:] = I0 + c
    w2[1:] = -c
    return w1, w2


@lru_cache(maxsize=6)
def _weights_cached(key: bytes, alpha: float, power: float | None) -> np.ndarray:
    t = np.frombuffer(key, dtype=float)
    N = t.size - 1
    W = np.zeros((N + 1, N + 1))
    h = np.diff(t)
    if np.all(np.abs(h - h[0]) <= 1e-12 * h[0]):
        # Toeplitz structure: cell with a = m h, b = (m + 1) h
        m = np.arange(N, dtype=float)
        left, right = _cell_weights(m * h[0], (m + 1.0) * h[0], alpha)
        n, j = np.tril_indices(N + 1)
        k = n - j
        Wl = np.where(j < n, left[np.maximum(k - 1, 0)], 0.0)
        Wr = np.where(j > 0, right[np.minimum(k, N - 1)], 0.0)
        W[n, j] = Wl + Wr
    else:
        n, j = np.tril_indices(N + 1, -1)
        left, right = _cell_weights(t[n] - t[j + 1], t[n] - t[j], alpha)
        W[n, j] = left
        W[n, j + 1] += right
        del n, j, left, right
    if power is not None:
        # drop the linear rule on [t0, t1], use the power-law extrapolation instead
        left0, right0 = _cell_weights(t[1:] - t[1], t[1:], alpha)
        W[1:, 0] -= left0
        W[1:, 1] -= right0
        W[:, 0] = 0.0
        w1, w2 = _singular_first_cell(t, alpha, power)
        W[:, 1] += w1
        W[:, 2] += w2
    W.setflags(write=False)
    return W


def product_weights(grid: TimeGrid, alpha: float, power: float | None = None) -> np.ndarray:
    """Matrix ``W`` with
    ``sum_j W[n, j] f(t_j) ~ int_0^{t_n} (t_n - s)^(alpha-1) f(s) ds``.

    A ``power`` in ``[0, 1)`` switches the first cell to the extrapolation
    ``f(s) ~ a s^(-power) + c`` fitted at ``t_1, t_2`` (for data without a
    value at 0; a straight line when ``power`` is 0).  Column 0 is then zero
    and ``W[1, 2]`` is the only entry above the diagonal.  Otherwise ``W`` is
    lower triangular.
    """
    if not alpha > 0:
        raise NonPositiveAlpha(f"alpha must be positive, got {alpha}", key="alpha")
    if power is not None:
        if not 0.0 <= power < 1.0:
            raise ValidationError(f"first-cell power must lie in [0, 1), got {power}", key="power")
        power = float(power)
    return _weights_cached(grid.key(), float(alpha), power)


def _apply(W: np.ndarray, values: np.ndarray) -> np.ndarray:
    v = np.where(np.isfinite(values), values, 0.0)
    return W @ v


# }}}


# {{{ operators

def frac_integral(f: GridFn, alpha: float, power: float | None = None) -> GridFn:
    """Product-trapezoid approximation of :math:`J^\\alpha f`.

    ``power`` overrides the exponent used to extrapolate weighted data on the
    first cell (defaults to ``f.weight``).
    """
    if not alpha > 0:
        raise NonPositiveAlpha(f"alpha must be positive, got {alpha}", key="alpha")
    p = f.weight if power is None else power
    W = product_weights(f.grid, alpha, p if f.weight > 0 else None)
    out = _apply(W, f.values) / gamma(alpha)
    w = max(0.0, f.weight - alpha)
    if f.weight > 0 and w == 0.0:
        # J^alpha of t^-p vanishes at 0 when alpha > p
        out[0] = 0.0
    return GridFn(f.grid, out, min(w, 1.0 - 1e-12))


def grid_derivative(values: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Second-order backward differences; the node ``t_1`` uses the quadratic
    through ``t_0, t_1, t_2``.  Returns NaN at ``t_0``."""
    F = values
    out = np.full_like(F, np.nan)
    h = np.diff(t)
    # node 1: derivative of the interpolating quadratic through t0, t1, t2
    h0, h1 = h[0], h[1]
    out[1] = (-h1 / (h0 * (h0 + h1)) * F[0] + (h1 - h0) / (h0 * h1) * F[1]
              + h0 / (h1 * (h0 + h1)) * F[2])
    # nodes n >= 2: backward quadratic through t_{n-2}, t_{n-1}, t_n
    a = h[:-1][:, None]  # t_{n-1} - t_{n-2}
    b = h[1:][:, None]   # t_n - t_{n-1}
    out[2:] = ((2 * b + a) / (b * (a + b)) * F[2:] - (a + b) / (a * b) * F[1:-1]
               + b / (a * (a + b)) * F[:-2])
    return out


def _check_unit_order(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise AlphaOutOfRange(f"alpha must lie in (0, 1), got {alpha}", key="alpha")


def _inverse_integral(F: np.ndarray, grid: TimeGrid, alpha: float) -> np.ndarray:
    """Solve the discrete equation ``J^alpha_h v = F`` for ``v``.

    Rows ``t_1..t_N`` give N equations for N + 1 unknowns; the value at
    ``t_0`` is closed by linear extrapolation ``v_0 = 2 v_1 - v_2``, which
    couples the first two rows.  The rest is a forward substitution.
    """
    W = product_weights(grid, alpha) / gamma(alpha)
    A = np.array(W[1:, 1:])
    A[:, 0] += 2.0 * W[1:, 0]
    A[:, 1] -= W[1:, 0]
    v = np.empty_like(F)
    v[1:3] = np.linalg.solve(A[:2, :2], F[1:3])
    if F.shape[0] > 3:
        v[3:] = solve_triangular(A[2:, 2:], F[3:] - A[2:, :2] @ v[1:3], lower=True)
    v[0] = 2.0 * v[1] - v[2]
    return v


def rl_derivative(f: GridFn, alpha: float, method: str = "difference") -> GridFn:
    """Riemann-Liouville derivative ``d/dt J^(1-alpha) f`` on the grid.

    For data with a value at ``t_0`` the constant part is handled exactly:
    ``D^alpha f = D^alpha (f - f_0) + f_0 t^-alpha / Gamma(1 - alpha)``.

    ``method="difference"`` differences ``J^(1-alpha) f`` with second-order
    backward stencils.  ``method="inverse"`` instead inverts the product
    trapezoidal ``J^alpha``; it is exact whenever ``f - f_0`` is ``J^alpha``
    of a piecewise-linear function and avoids the O(1) error that
    differencing leaves at the first nodes for data behaving like
    ``t^alpha``.  It needs unweighted data.
    """
    _check_unit_order(alpha)
    if method not in ("difference", "inverse"):
        raise ValidationError(f"unknown method {method!r}", key="method")
    t = f.t
    if f.weight == 0.0:
        f0 = f.values[0]
        if method == "inverse":
            out = _inverse_integral(f.values - f0, f.grid, alpha)
        else:
            F = frac_integral(f.with_values(f.values - f0), 1.0 - alpha).values
            out = grid_derivative(F, t)
        with np.errstate(divide="ignore"):
            out[1:] += f0[None, :] * t[1:, None] ** (-alpha) / gamma(1.0 - alpha)
        if np.all(f0 == 0):
            # no t^-alpha singularity; for C^1 data D^alpha f(0) = 0, the
            # inverse method keeps its extrapolated value
            if method == "difference":
                out[0] = 0.0
            return GridFn(f.grid, out, 0.0)
        return GridFn(f.grid, out, alpha)
    if method == "inverse":
        raise ValidationError("the inverse method needs unweighted data", key="method")
    J = frac_integral(f, 1.0 - alpha)
    F = np.array(J.values)
    if J.weight > 0:
        raise ValidationError(
            f"weight {f.weight} too large for an order-{alpha} derivative", key="weight")
    out = grid_derivative(F, t)
    return GridFn(f.grid, out, min(f.weight + alpha, 1.0 - 1e-12))


def caputo_derivative(f: GridFn, alpha: float) -> GridFn:
    """Caputo derivative, computed as :math:`D^\\alpha (f - f(0))`."""
    _check_unit_order(alpha)
    if not f.has_initial_value():
        raise MissingInitialValue("Caputo derivative needs a value at t = 0", key="values")
    return rl_derivative(f.with_values(f.values - f.values[0]), alpha)


def sequential_derivative(f: GridFn, orders: SequentialOrders) -> GridFn:
    """Compose ``D^{eta_k} ... D^{eta_1} f``; unit orders use plain differencing."""
    g = f
    for eta in orders.etas:
        if eta == 1.0:
            if g.weight > 0:
                vals = np.array(g.values)
                vals[0] = 0.0
                d = grid_derivative(vals, g.t)
                d[1] = (vals[2] - vals[1]) / (g.t[2] - g.t[1])
                g = GridFn(g.grid, d, min(g.weight + 1.0, 1.0 - 1e-12))
            else:
                d = grid_derivative(g.values, g.t)
                d[0] = (-3 * g.values[0] + 4 * g.values[1] - g.values[2]) / (2 * (g.t[1] - g.t[0]))
                g = GridFn(g.grid, d, 0.0)
        else:
            g = rl_derivative(g, eta)
        inner = g.values[1:]
        if not np.all(np.isfinite(inner)):
            raise CompositionBlowup(f"non-finite values after applying order {eta}")
    return g


# }}}


# {{{ Mittag-Leffler and logarithmic kernels

def _ml_antiderivatives(x: np.ndarray, alpha: float, lam: np.ndarray):
    """Closed forms of ``int_0^x u^(alpha-1) E(lam u^alpha) du`` and
    ``int_0^x u^alpha E(lam u^alpha) du`` with ``E = E_{alpha,alpha}``.

    Integrating the series termwise gives
    ``x^alpha E_{alpha,alpha+1}(lam x^alpha)`` and
    ``x^(alpha+1) [E_{alpha,alpha+1} - E_{alpha,alpha+2}](lam x^alpha)``.
    """
    xa = x**alpha
    z = lam[:, None] * xa[None, :]
    e1 = mittag_leffler(alpha, alpha + 1.0, z)
    e2 = mittag_leffler(alpha, alpha + 2.0, z)
    return xa[None, :] * e1, (xa * x)[None, :] * (e1 - e2)


def ml_cell_weights(grid: TimeGrid, alpha: float, lams) -> tuple[np.ndarray, np.ndarray]:
    """Per-offset cell weights of the kernel ``u^(alpha-1) E_{alpha,alpha}(lam u^alpha)``
    on a uniform grid.  Returns ``(left, right)`` of shape ``(len(lams), N)``,
    indexed by ``m`` for the cell ``u in [m h, (m + 1) h]``."""
    if not grid.is_uniform:
        raise GridMismatch("Mittag-Leffler kernel weights need a uniform grid", key="grid")
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    h = grid.steps[0]
    x = h * np.arange(grid.N + 1, dtype=float)
    K1, K2 = _ml_antiderivatives(x, alpha, lams)
    I1 = np.diff(K1, axis=1)
    Iu = np.diff(K2, axis=1)
    a = x[:-1][None, :]
    b = x[1:][None, :]
    right = (b * I1 - Iu) / h
    left = (Iu - a * I1) / h
    return left, right


def ml_convolve(grid: TimeGrid, alpha: float, lams, values: np.ndarray) -> np.ndarray:
    """Product-integrated ``int_0^t (t-s)^(alpha-1) E_{alpha,alpha}(lam (t-s)^alpha) f(s) ds``.

    ``values`` has shape ``(N + 1, P)`` with one column per entry of ``lams``
    (or ``(N + 1,)`` for a single kernel).  Nonuniform grids fall back to a
    dense matrix built from the distinct node differences.
    """
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    f = np.asarray(values, dtype=float)
    squeeze = f.ndim == 1
    if squeeze:
        f = f[:, None]
    if f.shape != (grid.N + 1, lams.size):
        raise GridMismatch(f"values of shape {f.shape} do not match grid and kernels", key="values")
    N = grid.N
    out = np.zeros_like(f)
    if grid.is_uniform:
        left, right = ml_cell_weights(grid, alpha, lams)
        for m in range(N):
            out[m + 1:] += right[:, m] * f[1:N + 1 - m] + left[:, m] * f[:N - m]
    else:
        t = grid.nodes
        n, j = np.tril_indices(N + 1, -1)
        # cell j..j+1 seen from node n: a = t_n - t_{j+1}, b = t_n - t_j
        nn, jj = n, j
        mask = jj < nn
        a = t[nn[mask]] - t[jj[mask] + 1]
        b = t[nn[mask]] - t[jj[mask]]
        xs, inv = np.unique(np.concatenate([a, b]), return_inverse=True)
        K1, K2 = _ml_antiderivatives(xs, alpha, lams)
        ia, ib = inv[:a.size], inv[a.size:]
        I1 = K1[:, ib] - K1[:, ia]
        Iu = K2[:, ib] - K2[:, ia]
        hh = b - a
        right = (b * I1 - Iu) / hh
        left = (Iu - a * I1) / hh
        for p in range(lams.size):
            np.add.at(out[:, p], nn[mask], right[p] * f[jj[mask] + 1, p] + left[p] * f[jj[mask], p])
    return out[:, 0] if squeeze else out


_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


def log_product_weights(grid: TimeGrid, alpha: float) -> np.ndarray:
    """Like :func:`product_weights` for the weight ``ln(t-s) (t-s)^(alpha-1)``.

    The cell touching the evaluation point uses the closed form
    ``int u^(p-1) ln u = u^p (ln u / p - 1 / p^2)``; the other cells, where the
    weight is smooth, use 12-point Gauss-Legendre, which avoids the
    cancellation of differenced antiderivatives.
    """
    if not alpha > 0:
        raise NonPositiveAlpha(f"alpha must be positive, got {alpha}", key="alpha")
    t = grid.nodes
    N = grid.N
    W = np.zeros((N + 1, N + 1))

    def F(x, p):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(x > 0, x**p * (np.log(x) / p - 1.0 / p**2), 0.0)

    def cells(a, b):
        h = b - a
        left = np.empty_like(a)
        right = np.empty_like(a)
        z = a == 0
        if np.any(z):
            bz = b[z]
            I1 = F(bz, alpha)
            Iu = F(bz, alpha + 1.0)
            right[z] = (bz * I1 - Iu) / h[z]
            left[z] = Iu / h[z]
        nz = ~z
        if np.any(nz):
            an, bn, hn = a[nz], b[nz], h[nz]
            u = 0.5 * (an + bn)[:, None] + 0.5 * hn[:, None] * _GL_X[None, :]
            k = u ** (alpha - 1.0) * np.log(u) * (0.5 * hn[:, None] * _GL_W[None, :])
            right[nz] = (k * (bn[:, None] - u)).sum(axis=1) / hn
            left[nz] = (k * (u - an[:, None])).sum(axis=1) / hn
        return left, right

    if grid.is_uniform:
        h = grid.steps[0]
        m = np.arange(N, dtype=float)
        left, right = cells(m * h, (m + 1.0) * h)
        n, j = np.tril_indices(N + 1)
        k = n - j
        W[n, j] = (np.where(j < n, left[np.maximum(k - 1, 0)], 0.0)
                   + np.where(j > 0, right[np.minimum(k, N - 1)], 0.0))
    else:
        for nn in range(1, N + 1):
            left, right = cells(t[nn] - t[1:nn + 1], t[nn] - t[:nn])
            W[nn, :nn] += left
            W[nn, 1:nn + 1] += right
    return W


# }}}
