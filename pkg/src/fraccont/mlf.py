r"""Two-parameter Mittag-Leffler function on the real line.

.. math::

    E_{\alpha,\beta}(z) = \sum_{k\ge 0} \frac{z^k}{\Gamma(k\alpha + \beta)}

Two evaluation routes are used:

* the power series, summed in log space, accepted only when its rounding
  error estimate (``eps * sum |terms|``) is within the requested tolerance;
* the Hankel-type contour integral

  .. math::

      E_{\alpha,\beta}(z) = \frac{1}{2\alpha\pi i}\int_{\gamma_{\rho,\varphi}}
          \frac{\zeta^{(1-\beta)/\alpha} e^{\zeta^{1/\alpha}}}{\zeta - z}\,d\zeta
          \;[+\; \varphi_0(\alpha,\beta,z) \text{ if } z > \rho],

  with :math:`\varphi_0 = \alpha^{-1} z^{(1-\beta)/\alpha} e^{z^{1/\alpha}}`.

The contour consists of the arc :math:`|\zeta|=\rho,\ |\arg\zeta|\le\varphi`
and two rays :math:`\arg\zeta = \pm\varphi`, with
:math:`\pi\alpha/2 < \varphi < \min(\pi, \pi\alpha)`.  Only the upper half is
integrated since the integrand is conjugate-symmetric for real ``z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln, rgamma

from fraccont.errors import (
    ContourConstraintViolated,
    NonPositiveAlpha,
    NonPositiveZ,
    QuadratureDiverged,
    ToleranceNotReached,
    ValidationError,
)

EPS = np.finfo(float).eps

#: series is tried for |z| up to this value (and always for alpha >= 2)
SERIES_RADIUS = 5.0
#: default contour radius
DEFAULT_RHO = 1.0
#: default number of Gauss-Legendre nodes per panel
DEFAULT_NODES = 24

_MAX_TERMS = 20000
_CHUNK = 128
# rows of z evaluated against the contour rule at once (memory cap)
_ZBLOCK = 2048


@dataclass(frozen=True)
class MLQuery:
    """Parameters of one evaluation of :math:`E_{\\alpha,\\beta}(z)`."""

    alpha: float
    beta: float
    z: float
    tol: float = 1.0e-12

    def __post_init__(self) -> None:
        _check_alpha(self.alpha)
        if not self.tol > 0:
            raise ValidationError(f"tol must be positive, got {self.tol}", key="tol")
        for key in ("beta", "z"):
            if not math.isfinite(getattr(self, key)):
                raise ValidationError(f"{key} must be finite", key=key)


@dataclass(frozen=True)
class ContourSpec:
    """Contour radius, ray angle and Gauss nodes per panel.

    ``alpha0``/``alpha1`` optionally declare the band of orders the contour
    must serve; the angle is then checked against the whole band.
    """

    rho: float = DEFAULT_RHO
    phi: float | None = None
    nodes: int = DEFAULT_NODES
    alpha0: float | None = None
    alpha1: float | None = None

    def resolved_phi(self, alpha: float) -> float:
        if self.phi is not None:
            return self.phi
        a0 = alpha if self.alpha0 is None else self.alpha0
        a1 = alpha if self.alpha1 is None else self.alpha1
        return default_phi(a0, a1)

    def check(self, alpha: float, z: float | None = None) -> None:
        if not self.rho > 0:
            raise ContourConstraintViolated(f"rho must be positive, got {self.rho}", key="rho")
        if self.nodes < 4:
            raise ContourConstraintViolated("need at least 4 nodes per panel", key="nodes")
        a0 = alpha if self.alpha0 is None else self.alpha0
        a1 = alpha if self.alpha1 is None else self.alpha1
        if not a0 <= alpha <= a1:
            raise ContourConstraintViolated(
                f"alpha={alpha} outside declared band [{a0}, {a1}]", key="alpha")
        phi = self.resolved_phi(alpha)
        lo, hi = math.pi * a1 / 2, min(math.pi, math.pi * a0)
        if not lo < phi < hi:
            raise ContourConstraintViolated(
                f"phi={phi} must lie in ({lo}, {hi}) for alpha in [{a0}, {a1}]", key="phi")
        if z is not None and abs(z - self.rho) < 1e-8 * max(1.0, self.rho):
            raise ContourConstraintViolated("z lies on the contour arc", key="rho")


@dataclass(frozen=True)
class Phi0:
    """Leading growth term for z > 0 and its parameter derivatives."""

    value: float
    dAlpha: float
    dBeta: float


class MLPartials(NamedTuple):
    dAlpha: float
    dBeta: float


def _check_alpha(alpha: float) -> None:
    if not (alpha > 0 and math.isfinite(alpha)):
        raise NonPositiveAlpha(f"alpha must be positive, got {alpha}", key="alpha")


def default_phi(alpha0: float, alpha1: float | None = None) -> float:
    """Midpoint of the admissible angle interval for orders in [alpha0, alpha1]."""
    if alpha1 is None:
        alpha1 = alpha0
    lo, hi = math.pi * alpha1 / 2, min(math.pi, math.pi * alpha0)
    if not lo < hi:
        raise ContourConstraintViolated(
            f"no admissible contour angle for alpha in [{alpha0}, {alpha1}]", key="alpha")
    return 0.5 * (lo + hi)


# {{{ series

def _series(alpha: float, beta: float, z: np.ndarray, tol: float):
    """Sum the power series; returns (value, rounding error estimate)."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    absum = np.zeros_like(z)
    if z.size == 0:
        return out, absum
    logz = np.log(np.abs(z), where=z != 0, out=np.full_like(z, -np.inf))
    neg = z < 0
    active = np.ones(z.shape, dtype=bool)

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for k0 in range(0, _MAX_TERMS, _CHUNK):
            k = np.arange(k0, k0 + _CHUNK, dtype=float)
            x = k * alpha + beta
            # 1/Gamma(x) in log form; the few non-positive arguments use rgamma
            lg = np.where(x > 0, -gammaln(np.maximum(x, 1e-300)), 0.0)
            sg = np.where(x > 0, 1.0, 0.0)
            small = x <= 0
            if np.any(small):
                r = rgamma(x[small])
                lg[small] = np.log(np.abs(r), where=r != 0, out=np.full(r.shape, -np.inf))
                sg[small] = np.sign(r)

            zi = np.flatnonzero(active)
            kl = k[None, :] * logz[zi, None]
            kl = np.where(k[None, :] == 0, 0.0, kl)
            mag = np.exp(kl + lg[None, :])
            sign = sg[None, :] * np.where(neg[zi, None] & (k[None, :] % 2 == 1), -1.0, 1.0)
            terms = sign * mag
            out[zi] += terms.sum(axis=1)
            absum[zi] += mag.sum(axis=1)

            last = np.abs(terms[:, -1])
            done = (last <= tol * np.abs(out[zi])) & (x[-1] > 2)
            done |= ~np.isfinite(out[zi])
            done |= z[zi] == 0
            active[zi[done]] = False
            if not active.any():
                break
        else:
            raise ToleranceNotReached(
                f"series did not converge within {_MAX_TERMS} terms (alpha={alpha})")

    return out, 4.0 * EPS * absum


# }}}


# {{{ contour rule

def _ray_extent(alpha: float, beta: float, phi: float, s0: float) -> float:
    """Ray cutoff in s = r^(1/alpha) where the majorant drops below ~1e-18."""
    c = math.cos(phi / alpha)
    p = alpha - beta
    target = math.log(1e-18)

    def logmaj(s: float) -> float:
        return c * s + p * math.log(s) - (c * s0 + p * math.log(s0))

    s = max(2.0 * s0, 1.0)
    while logmaj(s) > target or (p > 0 and c + p / s > 0):
        s *= 2.0
        if s > 1e8:
            raise QuadratureDiverged("contour ray majorant does not decay")
    return s


@lru_cache(maxsize=256)
def _contour_rule(alpha: float, beta: float, rho: float, phi: float, nodes: int):
    """Nodes ``zeta`` and weights ``w`` (= d zeta) for the upper half contour,
    together with the analytic factor ``F = zeta^((1-beta)/alpha) e^{zeta^(1/alpha)} w``.
    Also returns ``logzeta`` and ``root = zeta^(1/alpha)`` for parameter derivatives."""
    x, wx = np.polynomial.legendre.leggauss(nodes)

    # arc: theta in [0, phi], split into panels of at most pi/4
    npan = max(1, math.ceil(phi / (math.pi / 4)))
    edges = np.linspace(0.0, phi, npan + 1)
    th = np.concatenate([0.5 * (b - a) * x + 0.5 * (a + b) for a, b in zip(edges[:-1], edges[1:])])
    wth = np.concatenate([0.5 * (b - a) * wx for a, b in zip(edges[:-1], edges[1:])])
    zeta_a = rho * np.exp(1j * th)
    logz_a = math.log(rho) + 1j * th
    root_a = rho ** (1.0 / alpha) * np.exp(1j * th / alpha)
    w_a = 1j * zeta_a * wth

    # ray: zeta = s^alpha e^{i phi}, s in [s0, S]
    s0 = rho ** (1.0 / alpha)
    S = _ray_extent(alpha, beta, phi, s0)
    # geometric panels up to 2 * s0 then uniform width <= 1.5
    edges = [s0]
    width = 0.25 * s0
    while edges[-1] < S:
        width = min(1.5, width * 2.0)
        edges.append(min(S, edges[-1] + width))
    edges = np.asarray(edges)
    s = np.concatenate([0.5 * (b - a) * x + 0.5 * (a + b) for a, b in zip(edges[:-1], edges[1:])])
    ws = np.concatenate([0.5 * (b - a) * wx for a, b in zip(edges[:-1], edges[1:])])
    eiphi = np.exp(1j * phi)
    zeta_r = s**alpha * eiphi
    logz_r = alpha * np.log(s) + 1j * phi
    root_r = s * np.exp(1j * phi / alpha)
    w_r = alpha * s ** (alpha - 1.0) * eiphi * ws

    zeta = np.concatenate([zeta_a, zeta_r])
    logz = np.concatenate([np.full(th.shape, 0j) + logz_a, logz_r])
    root = np.concatenate([root_a, root_r])
    w = np.concatenate([w_a, w_r])
    F = np.exp((1.0 - beta) / alpha * logz + root) * w
    for arr in (zeta, logz, root, F):
        arr.setflags(write=False)
    return zeta, logz, root, F


def _contour_sum(F: np.ndarray, zeta: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Im sum_j F_j / (zeta_j - z) for each z, in memory-bounded blocks."""
    out = np.empty(z.shape, dtype=float)
    for i in range(0, z.size, _ZBLOCK):
        zb = z[i:i + _ZBLOCK]
        out[i:i + _ZBLOCK] = (F[None, :] / (zeta[None, :] - zb[:, None])).sum(axis=1).imag
    return out


def _phi0_value(alpha: float, beta: float, z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        lz = np.log(z)
        return np.exp((1.0 - beta) / alpha * lz + np.exp(lz / alpha)) / alpha


def _contour(alpha: float, beta: float, z: np.ndarray, spec: ContourSpec) -> np.ndarray:
    phi = spec.resolved_phi(alpha)
    zeta, _, _, F = _contour_rule(alpha, beta, spec.rho, phi, spec.nodes)
    val = _contour_sum(F, zeta, z) / (alpha * math.pi)
    right = z > spec.rho
    if np.any(right):
        val[right] += _phi0_value(alpha, beta, z[right])
    return val


# }}}


def _explicit(alpha: float, beta: float, z: np.ndarray) -> np.ndarray | None:
    """Closed forms for parameters the general routes cannot resolve to
    relative accuracy: exponentially small values at alpha = 1 and the
    oscillatory alpha = 2 case where no contour exists."""
    with np.errstate(over="ignore", invalid="ignore"):
        if alpha == 1.0 and beta <= 1.0 and beta == math.floor(beta):
            m = int(1 - beta)
            return z**m * np.exp(z)
        if alpha == 2.0 and beta == 1.0:
            r = np.sqrt(np.abs(z))
            return np.where(z >= 0, np.cosh(r), np.cos(r))
    return None


def mittag_leffler(alpha: float, beta: float, z, tol: float = 1.0e-12,
                   contour: ContourSpec | None = None, use_explicit: bool = True):
    """Vectorised :math:`E_{\\alpha,\\beta}(z)` for real ``z`` (scalar or array).

    With ``use_explicit`` the elementary closed forms for
    :math:`(\\alpha,\\beta) = (1, 1-m)` and :math:`(2, 1)` are used.
    """
    _check_alpha(alpha)
    alpha = float(alpha)
    beta = float(beta)
    zarr = np.asarray(z, dtype=float)
    if use_explicit:
        ex = _explicit(alpha, beta, zarr)
        if ex is not None:
            return float(ex) if zarr.ndim == 0 else ex
    flat = zarr.ravel()
    out = np.empty_like(flat)

    spec = contour or ContourSpec()
    has_contour = alpha < 2
    if has_contour:
        spec.check(alpha)

    trial = np.abs(flat) <= SERIES_RADIUS
    if not has_contour:
        trial[:] = True
    todo = ~trial
    if trial.any():
        idx = np.flatnonzero(trial)
        val, err = _series(alpha, beta, flat[idx], tol)
        with np.errstate(invalid="ignore"):
            ok = (err <= 0.1 * tol * np.abs(val)) | (flat[idx] == 0) | np.isinf(val)
        out[idx[ok]] = val[ok]
        if not ok.all():
            if not has_contour:
                bad = flat[idx[~ok]]
                raise ToleranceNotReached(
                    f"series cancellation too severe at z={bad[0]:g} and no contour "
                    f"representation exists for alpha={alpha} >= 2")
            todo[idx[~ok]] = True
    if todo.any():
        idx = np.flatnonzero(todo)
        with np.errstate(over="ignore", invalid="ignore"):
            val = _contour(alpha, beta, flat[idx], spec)
        if np.any(np.isnan(val)):
            raise QuadratureDiverged(f"contour quadrature produced NaN (alpha={alpha}, beta={beta})")
        out[idx] = val

    if zarr.ndim == 0:
        return float(out[0])
    return out.reshape(zarr.shape)


def ml_eval(q: MLQuery) -> float:
    """Evaluate :math:`E_{\\alpha,\\beta}(z)` for one query."""
    return float(mittag_leffler(q.alpha, q.beta, q.z, tol=q.tol))


def ml_deriv_z(alpha: float, z: float, tol: float = 1.0e-12):
    """Derivative of :math:`E_{\\alpha,1}` in z, i.e. :math:`E_{\\alpha,\\alpha}(z)/\\alpha`."""
    _check_alpha(alpha)
    return mittag_leffler(alpha, alpha, z, tol=tol) / alpha


def phi0_eval(alpha: float, beta: float, z: float) -> Phi0:
    """Closed form of :math:`\\varphi_0` and its derivatives in alpha and beta."""
    _check_alpha(alpha)
    if not z > 0:
        raise NonPositiveZ(f"phi0 needs z > 0, got {z}", key="z")
    lz = math.log(z)
    root = math.exp(lz / alpha)
    try:
        value = math.exp((1.0 - beta) / alpha * lz + root) / alpha
    except OverflowError:
        value = math.inf
    dlog_a = -1.0 / alpha - (1.0 - beta) * lz / alpha**2 - root * lz / alpha**2
    dlog_b = -lz / alpha
    return Phi0(value=value, dAlpha=value * dlog_a, dBeta=value * dlog_b)


def ml_partials(q: MLQuery, c: ContourSpec | None = None) -> MLPartials:
    """Partial derivatives of :math:`E_{\\alpha,\\beta}(z)` in alpha and beta.

    The contour integrand is differentiated under the integral sign with the
    contour held fixed.  For ``z > rho`` the derivatives of the residue term
    :math:`\\varphi_0` are added.
    """
    c = c or ContourSpec()
    alpha, beta, z = q.alpha, q.beta, q.z
    if alpha >= 2:
        raise ContourConstraintViolated("contour derivatives need alpha < 2", key="alpha")
    c.check(alpha, z)
    phi = c.resolved_phi(alpha)
    zeta, logz, root, F = _contour_rule(alpha, beta, c.rho, phi, c.nodes)
    with np.errstate(over="ignore", invalid="ignore"):
        G = F / (zeta - z)
        base = G.sum().imag / (alpha * math.pi)
        da = (G * (-(1.0 - beta) * logz / alpha**2 - root * logz / alpha**2)).sum().imag
        da = da / (alpha * math.pi) - base / alpha
        db = (G * (-logz / alpha)).sum().imag / (alpha * math.pi)
    if z > c.rho:
        p = phi0_eval(alpha, beta, z)
        da += p.dAlpha
        db += p.dBeta
    if not (math.isfinite(da) and math.isfinite(db)):
        raise QuadratureDiverged(f"non-finite parameter derivative at z={z}")
    return MLPartials(float(da), float(db))


def partials_bound_constant(alpha: float, beta: float, zs, c: ContourSpec | None = None) -> float:
    """Smallest C with ``max(|dE/dalpha|, |dE/dbeta|) <= C / (1 + |z|)`` over ``zs``."""
    best = 0.0
    for z in np.asarray(zs, dtype=float).ravel():
        d = ml_partials(MLQuery(alpha, beta, float(z)), c)
        best = max(best, max(abs(d.dAlpha), abs(d.dBeta)) * (1.0 + abs(z)))
    return best
