"""Scalar special functions for fractional evolution on the negative real axis.

The two-parameter Mittag-Leffler function is evaluated by its Taylor series
near the origin and by numerical inversion of its Laplace transform

    L[t^{b-1} E_{a,b}(-x t^a)](s) = s^{a-b} / (s^a + x)

along a parabolic Hankel contour further out.  For ``a <= 1`` and real
``z <= 0`` the integrand has no singularity off the negative real axis, so
the trapezoid rule on the contour converges geometrically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "MlEval",
    "gamma_fn",
    "ml",
    "ml_values",
    "mainardi_moment",
    "mainardi_moment_quadrature",
    "subordination_quadrature",
]

#: |z| at or below which the Taylor series is used.
SERIES_THRESHOLD = 1.0
_SERIES_MAX_TERMS = 600

# Parabola s(u) = mu (1 + iu)^2, u = h k, k = -N..N.
_CONTOUR_N = 64
_CONTOUR_MU = 1.0
_CONTOUR_H = 0.1
_EPS = np.finfo(float).eps


def gamma_fn(x):
    """Gamma function for real arguments.

    Scalars go through :func:`math.gamma`; arrays through
    :func:`scipy.special.gamma`.  Poles (0, -1, -2, ...) raise ``ValueError``.
    """
    if np.ndim(x) == 0:
        xf = float(x)
        if xf <= 0 and xf == math.floor(xf):
            raise ValueError(f"gamma_fn: pole at x={xf}")
        return math.gamma(xf)
    arr = np.asarray(x, dtype=float)
    if np.any((arr <= 0) & (arr == np.floor(arr))):
        raise ValueError("gamma_fn: array contains a pole (nonpositive integer)")
    return special.gamma(arr)


@dataclass(frozen=True)
class MlEval:
    """One evaluation of E_{alpha,b}(z) with its provenance."""

    alpha: float
    b: float
    z: float
    value: float
    method: str
    est_error: float


def _check_params(alpha: float, b: float) -> None:
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if not b > 0.0:
        raise ValueError(f"b must be positive, got {b}")


def _series(alpha: float, b: float, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    total = np.zeros_like(z)
    magnitude = np.zeros_like(z)
    zn = np.ones_like(z)
    term = np.zeros_like(z)
    for n in range(_SERIES_MAX_TERMS):
        term = zn * special.rgamma(alpha * n + b)
        total += term
        magnitude += np.abs(term)
        zn = zn * z
        if n > 4 and np.all(np.abs(term) <= _EPS * np.abs(total)):
            break
    return total, np.abs(term) + _EPS * magnitude


_U = _CONTOUR_H * np.arange(-_CONTOUR_N, _CONTOUR_N + 1)
_S = _CONTOUR_MU * (1.0 + 1j * _U) ** 2
_DS = 2j * _CONTOUR_MU * (1.0 + 1j * _U)
_EXP_S_DS = np.exp(_S) * _DS


def _contour(alpha: float, b: float, z: np.ndarray, chunk: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    num = _EXP_S_DS * _S ** (alpha - b)
    sa = _S**alpha
    out = np.empty_like(z)
    err = np.empty_like(z)
    for start in range(0, z.size, chunk):
        zz = z[start : start + chunk]
        f = num[None, :] / (sa[None, :] - zz[:, None])
        out[start : start + chunk] = (f.sum(axis=1) * (_CONTOUR_H / (2j * np.pi))).real
        err[start : start + chunk] = 8 * _EPS * np.abs(f).sum(axis=1) * _CONTOUR_H / (2 * np.pi)
    return out, err


def ml_values(alpha: float, b: float, z) -> np.ndarray:
    """Vectorized E_{alpha,b}(z) for real ``z <= 0``.

    Same algorithm as :func:`ml` without the per-point bookkeeping; this is
    what the solvers call.
    """
    _check_params(alpha, b)
    z = np.asarray(z, dtype=float)
    if np.any(z > 0):
        raise ValueError("ml_values: only z <= 0 is supported")
    flat = z.ravel()
    out = np.empty_like(flat)
    near = np.abs(flat) <= SERIES_THRESHOLD
    if alpha == 1.0 and b == 1.0:
        out = np.exp(flat)
    else:
        if near.any():
            out[near] = _series(alpha, b, flat[near])[0]
        if (~near).any():
            out[~near] = _contour(alpha, b, flat[~near])[0]
    return out.reshape(z.shape)


def ml(alpha: float, b: float, z: float) -> MlEval:
    """Evaluate the two-parameter Mittag-Leffler function E_{alpha,b}(z).

    Parameters
    ----------
    alpha : float
        Order in (0, 1].
    b : float
        Second parameter, positive.
    z : float
        Argument; must be <= 0.

    Returns
    -------
    MlEval
        Value, the method used (``"series"`` or ``"integral"``) and an
        a-posteriori roundoff/truncation estimate.
    """
    _check_params(alpha, b)
    z = float(z)
    if z > 0:
        raise ValueError(f"ml: only z <= 0 is supported, got z={z}")
    arr = np.array([z])
    if abs(z) <= SERIES_THRESHOLD:
        value, err = _series(alpha, b, arr)
        method = "series"
    else:
        value, err = _contour(alpha, b, arr)
        method = "integral"
    return MlEval(alpha, b, z, float(value[0]), method, float(err[0]))


def mainardi_moment(beta: float, r: float) -> float:
    """Closed-form moment of the Mainardi density, Gamma(r+1)/Gamma(beta*r+1)."""
    if not (0.0 < beta < 1.0):
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    if r <= -1:
        raise ValueError(f"moment order must exceed -1, got {r}")
    return gamma_fn(r + 1.0) / gamma_fn(beta * r + 1.0)


# --- Mainardi density (private: only used by the quadrature checks) ---------

_MAINARDI_SERIES_TERMS = 120


def _mainardi_series(beta: float, x: np.ndarray) -> np.ndarray:
    # M(x) = (1/pi) sum_{n>=1} (-x)^{n-1}/(n-1)! Gamma(beta n) sin(pi beta n)
    n = np.arange(1, _MAINARDI_SERIES_TERMS + 1)
    logc = special.gammaln(beta * n) - special.gammaln(n)
    coef = np.exp(logc) * np.sin(np.pi * beta * n) / np.pi
    powers = (-x[:, None]) ** (n - 1)[None, :]
    return powers @ coef


def _zolotarev_kernel(beta: float, phi: np.ndarray) -> np.ndarray:
    q = 1.0 / (1.0 - beta)
    return (np.sin(beta * phi) / np.sin(phi)) ** q * np.sin((1.0 - beta) * phi) / np.sin(beta * phi)


_GL_PHI_NODES, _GL_PHI_WEIGHTS = np.polynomial.legendre.leggauss(160)


def _mainardi_integral(beta: float, x: np.ndarray) -> np.ndarray:
    phi = 0.5 * np.pi * (_GL_PHI_NODES + 1.0)
    w = 0.5 * np.pi * _GL_PHI_WEIGHTS
    a = _zolotarev_kernel(beta, phi)
    q = 1.0 / (1.0 - beta)
    inner = (a[None, :] * np.exp(-(x[:, None] ** q) * a[None, :])) @ w
    return x ** (beta * q) * inner / (np.pi * (1.0 - beta))


def _mainardi_density(beta: float, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    out = np.empty_like(flat)
    small = flat <= 1.0
    if small.any():
        out[small] = _mainardi_series(beta, flat[small])
    if (~small).any():
        out[~small] = _mainardi_integral(beta, flat[~small])
    return out.reshape(x.shape)


def _mainardi_grid(beta: float, panels: int = 96, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    # Tail: M(x) <~ exp(-A0 x^q) with A0 the Zolotarev kernel at phi=0.
    a0 = (1.0 - beta) * beta ** (beta / (1.0 - beta))
    x_max = (90.0 / a0) ** (1.0 - beta)
    nodes, weights = np.polynomial.legendre.leggauss(order)
    # geometric refinement toward 0 resolves x^r for fractional r
    first = x_max / panels
    graded = first * 2.0 ** -np.arange(40, 0, -1)
    edges = np.concatenate([[0.0], graded, np.linspace(first, x_max, panels)])
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    return x, w


def mainardi_moment_quadrature(beta: float, r) -> np.ndarray:
    """Moments of the Mainardi density by direct numerical integration.

    The density is evaluated pointwise (series near the origin, Zolotarev
    integral beyond) and integrated with composite Gauss-Legendre; this is the
    independent check of :func:`mainardi_moment`.  ``r`` may be an array.
    """
    if not (0.0 < beta < 1.0):
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    r = np.atleast_1d(np.asarray(r, dtype=float))
    x, w = _mainardi_grid(beta)
    dens = _mainardi_density(beta, x) * w
    return np.array([np.dot(x**ri, dens) for ri in r])


def subordination_quadrature(beta: float, s) -> np.ndarray:
    """Integral of M_beta(eta) exp(-eta s) over eta > 0, which equals E_beta(-s)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    x, w = _mainardi_grid(beta)
    dens = _mainardi_density(beta, x) * w
    return np.array([np.dot(np.exp(-x * si), dens) for si in s])
