"""Linear time-fractional heat and advection-diffusion solvers on the torus.

Two independent routes to

    d^beta u - sigma Lap u + b.Du = F,   u(0) = u0:

* :func:`solve_heat_mild` (b = 0) evaluates the Mittag-Leffler mild
  solution mode by mode, with product integration of the Duhamel term that is
  exact for sources piecewise linear in time;
* :func:`solve_heat_l1` marches the L1 scheme with implicit spectral
  diffusion and explicit (lagged) drift.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import StabilityError
from .frac_calc import TimeGrid, TimeSeries
from .mittag_leffler import gamma_fn, ml_values
from .torus import TorusGrid

__all__ = [
    "LinearProblem",
    "SpaceTimeField",
    "MildPropagator",
    "solve_heat_mild",
    "solve_heat_l1",
    "max_principle_gap",
    "blowup_threshold",
]

log = logging.getLogger(__name__)

#: A space-time field is a time series whose samples are spatial fields.
SpaceTimeField = TimeSeries

BLOWUP_FACTOR = 1e6
ROUNDOFF_FLOOR = 1e-14


@dataclass
class LinearProblem:
    """Data of d^beta u - sigma Lap u + b.Du = F on T^d x (0, T).

    ``source`` has shape ``(M+1, *grid.shape)`` (None means zero) and
    ``drift`` shape ``(M+1, dim, *grid.shape)`` (None means no drift).
    ``classical=True`` replaces the Caputo derivative by d/dt (backward
    Euler), for cross-checks of the beta -> 1 limit.
    """

    grid: TorusGrid
    tgrid: TimeGrid
    sigma: float
    u0: np.ndarray
    source: np.ndarray | None = None
    drift: np.ndarray | None = None
    classical: bool = False

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        self.u0 = self.grid.check(self.u0, "u0")
        steps = self.tgrid.steps + 1
        if self.source is not None:
            self.source = np.asarray(self.source, dtype=float)
            if self.source.shape != (steps,) + self.grid.shape:
                raise ValueError(f"source shape {self.source.shape} != {(steps,) + self.grid.shape}")
        if self.drift is not None:
            self.drift = np.asarray(self.drift, dtype=float)
            if self.drift.shape != (steps, self.grid.dim) + self.grid.shape:
                raise ValueError(f"drift shape {self.drift.shape} != {(steps, self.grid.dim) + self.grid.shape}")

    @property
    def beta(self) -> float:
        return self.tgrid.beta

    def source_or_zero(self) -> np.ndarray:
        if self.source is None:
            return np.zeros((self.tgrid.steps + 1,) + self.grid.shape)
        return self.source


def blowup_threshold(u0: np.ndarray, source: np.ndarray | None, tgrid: TimeGrid) -> float:
    f_sup = 0.0 if source is None else float(np.max(np.abs(source)))
    return BLOWUP_FACTOR * (float(np.max(np.abs(u0))) + f_sup * tgrid.t_final**tgrid.beta)


class MildPropagator:
    """Mode-wise Mittag-Leffler propagator for d^beta u + lam u = f.

    For each distinct decay rate ``lam`` the class builds the vector
    E_beta(-lam t_n^beta) and the lower-triangular Duhamel matrix ``D`` with

        int_0^{t_n} w^{beta-1} E_{beta,beta}(-lam w^beta) f(t_n - w) dw = (D f)[n]

    for f piecewise linear between nodes.  The construction uses the
    antiderivatives K1(w) = w^beta E_{beta,beta+1}(-lam w^beta) and
    K2(w) = w^{beta+1} E_{beta,beta+2}(-lam w^beta).

    Instances cache matrices and are meant for a single owner.
    """

    def __init__(self, tgrid, rates: np.ndarray, beta: float | None = None, cache_limit_bytes: float = 2e8):
        if isinstance(tgrid, TimeGrid):
            self.nodes = tgrid.nodes
            self.beta = tgrid.beta if beta is None else float(beta)
            self.dt = tgrid.dt if tgrid.uniform else None
        else:
            self.nodes = np.asarray(tgrid, dtype=float)
            if beta is None:
                raise ValueError("beta is required when raw nodes are given")
            self.beta = float(beta)
            h = np.diff(self.nodes)
            self.dt = float(h[0]) if np.allclose(h, h[0], rtol=1e-12, atol=0) else None
        self.rates = np.asarray(rates, dtype=float)
        flat = self.rates.ravel()
        self._keys, self._inverse = np.unique(np.round(flat, 9), return_inverse=True)
        self._groups = [np.flatnonzero(self._inverse == i) for i in range(self._keys.size)]
        M = self.nodes.size - 1
        self._cache_ok = self._keys.size * (M + 1) ** 2 * 8 <= cache_limit_bytes
        self._decay: dict[int, np.ndarray] = {}
        self._duhamel: dict[int, np.ndarray] = {}

    @property
    def groups(self) -> list[np.ndarray]:
        """Flat mode indices sharing one decay rate."""
        return self._groups

    def _kernels(self, lam: float, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        beta = self.beta
        if lam == 0.0:
            return w**beta / gamma_fn(1 + beta), w ** (1 + beta) / gamma_fn(2 + beta)
        z = -lam * w**beta
        return w**beta * ml_values(beta, beta + 1, z), w ** (beta + 1) * ml_values(beta, beta + 2, z)

    def decay(self, i: int) -> np.ndarray:
        if i not in self._decay:
            lam = float(self._keys[i])
            t = self.nodes
            self._decay[i] = np.ones_like(t) if lam == 0 else ml_values(self.beta, 1.0, -lam * t**self.beta)
        return self._decay[i]

    def duhamel(self, i: int) -> np.ndarray:
        if i in self._duhamel:
            return self._duhamel[i]
        lam = float(self._keys[i])
        t = self.nodes
        M = t.size - 1
        D = np.zeros((M + 1, M + 1))
        if self.dt is not None:
            dt = self.dt
            K1, K2 = self._kernels(lam, dt * np.arange(M + 1))
            for n in range(1, M + 1):
                j = np.arange(n)  # interval k = n - j spans distances [j dt, (j+1) dt]
                dK2 = (K2[j + 1] - K2[j]) / dt
                D[n, n - j - 1] += K1[j + 1] - dK2
                D[n, n - j] += dK2 - K1[j]
        else:
            rows, cols = np.tril_indices(M + 1)
            K1 = np.zeros((M + 1, M + 1))
            K2 = np.zeros((M + 1, M + 1))
            k1, k2 = self._kernels(lam, t[rows] - t[cols])
            K1[rows, cols] = k1
            K2[rows, cols] = k2
            for n in range(1, M + 1):
                k = np.arange(1, n + 1)
                h = t[k] - t[k - 1]
                dK2 = (K2[n, k - 1] - K2[n, k]) / h
                D[n, k - 1] += K1[n, k - 1] - dK2
                D[n, k] += dK2 - K1[n, k]
        if self._cache_ok:
            self._duhamel[i] = D
        return D

    def apply(self, u0_hat: np.ndarray, f_hat: np.ndarray | None) -> np.ndarray:
        """Propagate Fourier data; ``f_hat`` has shape ``(M+1, *rates.shape)``."""
        M = self.nodes.size - 1
        shape = self.rates.shape
        u0_flat = u0_hat.reshape(-1)
        f_flat = None if f_hat is None else f_hat.reshape(M + 1, -1)
        out = np.zeros((M + 1, u0_flat.size), dtype=complex)
        # coefficients at FFT roundoff level are treated as absent
        u0_floor = ROUNDOFF_FLOOR * np.max(np.abs(u0_flat), initial=0.0)
        f_floor = 0.0 if f_flat is None else ROUNDOFF_FLOOR * np.max(np.abs(f_flat), initial=0.0)
        for i, idx in enumerate(self._groups):
            if np.any(np.abs(u0_flat[idx]) > u0_floor):
                out[:, idx] = self.decay(i)[:, None] * u0_flat[idx][None, :]
            if f_flat is not None and np.any(np.abs(f_flat[:, idx]) > f_floor):
                out[:, idx] += self.duhamel(i) @ f_flat[:, idx]
        return out.reshape((M + 1,) + shape)


def solve_heat_mild(p: LinearProblem, propagator: MildPropagator | None = None) -> SpaceTimeField:
    """Mittag-Leffler mild solution of the drift-free problem.

    The Duhamel integral is taken over (0, t): the source is not extended to
    negative times.
    """
    if p.drift is not None and np.any(p.drift != 0):
        raise ValueError("solve_heat_mild handles b = 0 only; use solve_heat_l1 for drift")
    if p.classical:
        raise ValueError("the mild propagator is fractional only; use solve_heat_l1(classical=True)")
    if propagator is None:
        propagator = MildPropagator(p.tgrid, -p.sigma * p.grid.laplacian_symbol)
    u0_hat = p.grid.transform(p.u0)
    f_hat = None if p.source is None else p.grid.transform(p.source)
    u_hat = propagator.apply(u0_hat, f_hat)
    return TimeSeries(p.tgrid, p.grid.inverse_transform(u_hat))


def solve_heat_l1(p: LinearProblem, history: np.ndarray | None = None, upto: int | None = None) -> SpaceTimeField:
    """L1 time stepping with implicit diffusion and lagged drift.

    Parameters
    ----------
    p : LinearProblem
    history : ndarray, optional
        Accepted values at nodes ``0..k`` (shape ``(k+1, *grid.shape)``);
        stepping resumes at node ``k+1`` and re-integrates the full memory.
    upto : int, optional
        Last node to compute (default: the final node).  The returned series
        is still defined on ``p.tgrid``; nodes after ``upto`` are NaN.

    Raises
    ------
    StabilityError
        If the sup norm exceeds ``1e6 (|u0| + |F| T^beta)``.
    """
    grid, tgrid = p.grid, p.tgrid
    M = tgrid.steps
    upto = M if upto is None else int(upto)
    lam = -p.sigma * grid.laplacian_symbol
    F = p.source_or_zero()
    F_hat = grid.transform(F[: upto + 1])
    limit = blowup_threshold(p.u0, p.source, tgrid)

    U = np.full((M + 1,) + grid.shape, np.nan)
    U_hat = np.zeros((M + 1,) + grid.shape, dtype=complex)
    if history is None:
        history = p.u0[None]
    start = history.shape[0]
    if np.max(np.abs(history[0] - p.u0)) > 0:
        raise ValueError("history must start with u0")
    U[:start] = history
    U_hat[:start] = grid.transform(history)
    W = tgrid.caputo
    t = tgrid.nodes
    for n in range(start, upto + 1):
        rhs = F_hat[n].copy()
        if p.drift is not None:
            adv = np.sum(p.drift[n - 1] * grid.gradient(U[n - 1]), axis=0)
            rhs -= grid.transform(adv)
        if p.classical:
            h = t[n] - t[n - 1]
            U_hat[n] = (rhs + U_hat[n - 1] / h) / (1.0 / h + lam)
        else:
            hist = np.tensordot(W[n, :n], U_hat[:n], axes=1)
            U_hat[n] = (rhs - hist) / (W[n, n] + lam)
        U[n] = grid.inverse_transform(U_hat[n])
        sup = float(np.max(np.abs(U[n])))
        if not np.isfinite(sup) or sup > limit:
            raise StabilityError(
                f"L1 solve diverged at t={t[n]:.6g}: |u|={sup:.3e} exceeds {limit:.3e}", t_reached=float(t[n])
            )
    return TimeSeries(tgrid, U)


def max_principle_gap(u: SpaceTimeField, p: LinearProblem) -> float:
    """sup|u| - (sup|u0| + T^beta / Gamma(1+beta) sup|F|); <= 0 certifies the bound."""
    beta = p.tgrid.beta
    f_sup = 0.0 if p.source is None else float(np.max(np.abs(p.source)))
    bound = float(np.max(np.abs(p.u0))) + p.tgrid.t_final**beta / gamma_fn(1 + beta) * f_sup
    return float(np.nanmax(np.abs(u.values))) - bound
