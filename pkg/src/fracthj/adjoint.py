"""Backward fractional Fokker-Planck equation and adjoint diagnostics.

The adjoint of the linearized Hamilton-Jacobi operator is

    d~^beta rho - sigma Lap rho - div(b rho) = 0,   rho(tau) = rho_tau,

with the backward Caputo derivative d~^beta and b = D_pH(x, Du).  With
s = tau - t it becomes a forward problem for r(s) = rho(tau - s):

    d^beta r - sigma Lap r - div(b~ r) = 0,   r(0) = rho_tau,   b~(s) = b(tau - s).

Two discretizations of the reversed problem are provided:

* ``"spectral"``: Mittag-Leffler exponential integrator, diffusion exact
  per Fourier mode, the drift term as a piecewise-linear source with one
  predictor and two corrector sweeps per step;
* ``"upwind"``: L1 in time, implicit second-order finite-difference
  diffusion and explicit donor-cell fluxes, nonnegative under a step bound.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import StabilityError
from .frac_calc import TimeGrid, TimeSeries, caputo_matrix, rl_integral, trapezoid
from .hj import HjProblem, drift_field
from .linear import MildPropagator
from .mittag_leffler import gamma_fn
from .torus import TorusGrid

__all__ = [
    "FpProblem",
    "solve_fp_backward",
    "solve_fp_l1",
    "upwind_divergence",
    "upwind_admissible_dt",
    "mass_deviation",
    "crossed_quantity",
    "duality_terms",
    "duality_residual",
    "adjoint_problem",
    "peaked_density",
]

log = logging.getLogger(__name__)

MASS_TOL = 1e-12
CORRECTOR_SWEEPS = 2


@dataclass
class FpProblem:
    """Backward Fokker-Planck data on T^d x (0, tau), tau = tgrid.t_final.

    ``drift`` has shape ``(M+1, dim, *grid.shape)`` on the forward nodes
    (None means zero drift); ``terminal`` is a nonnegative unit-mass field.
    """

    grid: TorusGrid
    tgrid: TimeGrid
    sigma: float
    terminal: np.ndarray
    drift: np.ndarray | None = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        self.terminal = self.grid.check(self.terminal, "terminal density")
        if np.any(self.terminal < 0):
            raise ValueError("terminal density must be nonnegative")
        mass = float(self.grid.mean(self.terminal))
        if abs(mass - 1.0) > MASS_TOL:
            raise ValueError(f"terminal density must have unit mass, got {mass:.17g}")
        if self.drift is not None:
            self.drift = np.asarray(self.drift, dtype=float)
            expected = (self.tgrid.steps + 1, self.grid.dim) + self.grid.shape
            if self.drift.shape != expected:
                raise ValueError(f"drift has shape {self.drift.shape}, expected {expected}")
            if not np.all(np.isfinite(self.drift)):
                raise ValueError("drift must be finite")

    @property
    def beta(self) -> float:
        return self.tgrid.beta

    def reversed_nodes(self) -> np.ndarray:
        return self.tgrid.reversed_nodes()

    def reversed_drift(self) -> np.ndarray | None:
        return None if self.drift is None else self.drift[::-1]


def peaked_density(grid: TorusGrid, center, concentration: float) -> np.ndarray:
    """Smooth unit-mass density exp(k sum_j cos 2pi(x_j - c_j)), normalized on the grid.

    Larger ``concentration`` approximates a point mass at ``center``.
    """
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if center.size != grid.dim:
        raise ValueError(f"center needs {grid.dim} coordinates")
    if concentration < 0:
        raise ValueError("concentration must be nonnegative")
    phase = sum(np.cos(2 * np.pi * (x - c)) for x, c in zip(grid.coords, center))
    rho = np.exp(concentration * (phase - grid.dim))
    return rho / grid.mean(rho)


# -- spectral exponential integrator -------------------------------------------------


@lru_cache(maxsize=2)
def _reversed_propagator(grid: TorusGrid, tgrid: TimeGrid, sigma: float) -> MildPropagator:
    # repeated adjoint solves on one grid (several terminal densities) share the kernels
    return MildPropagator(tgrid.reversed_nodes(), -sigma * grid.laplacian_symbol, beta=tgrid.beta)


def _solve_spectral(p: FpProblem) -> np.ndarray:
    grid = p.grid
    M = p.tgrid.steps
    prop = _reversed_propagator(grid, p.tgrid, float(p.sigma))
    r0_hat = grid.transform(p.terminal)
    R_hat = np.zeros((M + 1,) + grid.shape, dtype=complex)
    R_hat[0] = r0_hat
    R = np.zeros((M + 1,) + grid.shape)
    R[0] = p.terminal
    bt = p.reversed_drift()
    if bt is None:
        R_hat[:] = prop.apply(r0_hat, None)
        return grid.inverse_transform(R_hat)

    G_hat = np.zeros((M + 1, grid.size), dtype=complex)
    G_hat[0] = grid.transform(grid.divergence(bt[0] * R[0])).ravel()
    groups = prop.groups
    decays = [prop.decay(i) for i in range(len(groups))]
    r0_flat = r0_hat.ravel()
    for n in range(1, M + 1):
        base = np.empty(grid.size, dtype=complex)
        diag = np.empty(grid.size)
        for i, idx in enumerate(groups):
            D = prop.duhamel(i)
            base[idx] = decays[i][n] * r0_flat[idx] + D[n, :n] @ G_hat[:n, idx]
            diag[idx] = D[n, n]
        g = G_hat[n - 1]
        for _ in range(1 + CORRECTOR_SWEEPS):
            rn_hat = base + diag * g
            rn = grid.inverse_transform(rn_hat.reshape(grid.shape))
            g = grid.transform(grid.divergence(bt[n] * rn)).ravel()
        G_hat[n] = g
        R_hat[n] = rn_hat.reshape(grid.shape)
        R[n] = rn
    return R


# -- L1 with finite-volume transport ---------------------------------------------------


def upwind_divergence(grid: TorusGrid, velocity: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Donor-cell approximation of div(velocity r) in conservative flux form."""
    h = grid.spacing
    out = np.zeros_like(r)
    for j in range(grid.dim):
        v = velocity[j]
        v_face = 0.5 * (v + np.roll(v, -1, axis=j))  # at i + 1/2
        flux = np.maximum(v_face, 0) * r + np.minimum(v_face, 0) * np.roll(r, -1, axis=j)
        out += (flux - np.roll(flux, 1, axis=j)) / h
    return out


def _outflow_rate(grid: TorusGrid, velocity: np.ndarray) -> float:
    rate = np.zeros(grid.shape)
    for j in range(grid.dim):
        v = velocity[j]
        v_face = 0.5 * (v + np.roll(v, -1, axis=j))
        rate += (np.maximum(v_face, 0) + np.maximum(-np.roll(v_face, 1, axis=j), 0)) / grid.spacing
    return float(rate.max())


def upwind_admissible_dt(beta: float, rate: float) -> float:
    """Largest uniform step with (1 - b_1) dt^-beta / Gamma(2-beta) >= rate."""
    if rate <= 0:
        return np.inf
    b1 = 2.0 ** (1.0 - beta) - 1.0
    return float(((1.0 - b1) / (gamma_fn(2.0 - beta) * rate)) ** (1.0 / beta))


def solve_fp_l1(
    p: FpProblem,
    transport: Callable[[TorusGrid, np.ndarray, np.ndarray], np.ndarray] = upwind_divergence,
    check_step: bool = True,
) -> np.ndarray:
    """L1 march of the reversed problem with explicit transport ``transport(grid, v, r) ~ div(v r)``.

    The velocity is v = -b~ and is lagged by one step.  With ``check_step``
    the positivity bound -W[n, n-1] >= max outflow rate is verified for every
    step before marching.
    """
    grid = p.grid
    s = p.reversed_nodes()
    M = s.size - 1
    W = caputo_matrix(s, p.beta) if not p.tgrid.uniform else p.tgrid.caputo
    bt = p.reversed_drift()
    vel = None if bt is None else -bt
    if vel is not None and check_step:
        for n in range(1, M + 1):
            rate = _outflow_rate(grid, vel[n - 1])
            if -W[n, n - 1] < rate * (1 - 1e-12):
                dt_ok = upwind_admissible_dt(p.beta, rate)
                raise StabilityError(
                    f"upwind step restriction violated at s={s[n]:.6g}: admissible dt <= {dt_ok:.6g}",
                    t_reached=float(p.tgrid.t_final - s[n - 1]),
                    admissible_dt=dt_ok,
                )
    symbol = -p.sigma * grid.fd_laplacian_symbol
    R = np.zeros((M + 1,) + grid.shape)
    R[0] = p.terminal
    R_hat = np.zeros((M + 1,) + grid.shape, dtype=complex)
    R_hat[0] = grid.transform(R[0])
    for n in range(1, M + 1):
        rhs = -np.tensordot(W[n, :n], R_hat[:n], axes=1)
        if vel is not None:
            rhs = rhs - grid.transform(transport(grid, vel[n - 1], R[n - 1]))
        R_hat[n] = rhs / (W[n, n] + symbol)
        R[n] = grid.inverse_transform(R_hat[n])
    return R


def solve_fp_backward(p: FpProblem, scheme: str = "spectral") -> TimeSeries:
    """Solve the backward Fokker-Planck problem; values are on the forward nodes.

    Raises
    ------
    StabilityError
        For ``scheme="upwind"`` when the step bound for nonnegativity fails;
        the message and ``admissible_dt`` name the largest admissible step.
    """
    if scheme == "spectral":
        R = _solve_spectral(p)
    elif scheme == "upwind":
        R = solve_fp_l1(p, upwind_divergence)
    else:
        raise ValueError(f"scheme must be 'spectral' or 'upwind', got {scheme!r}")
    return TimeSeries(p.tgrid, R[::-1])


# -- diagnostics -----------------------------------------------------------------------


def mass_deviation(rho: TimeSeries) -> float:
    """max_t |int rho(t) - int rho(tau)| with the grid quadrature."""
    vals = rho.values
    mass = vals.reshape(vals.shape[0], -1).mean(axis=1)
    return float(np.max(np.abs(mass - mass[-1])))


def crossed_quantity(u: TimeSeries, rho: TimeSeries, grid: TorusGrid, gamma: float) -> float:
    """int_0^tau int |Du|^gamma rho dx dt (spectral gradient, trapezoid in time)."""
    if u.grid != rho.grid:
        raise ValueError("u and rho must share the time grid")
    Du = grid.gradient(u.values)
    mag = np.sqrt(np.sum(Du**2, axis=-grid.dim - 1))
    return float(trapezoid(grid.mean(mag**gamma * rho.values), u.grid.nodes))


def duality_terms(u: TimeSeries, rho: TimeSeries, prob: HjProblem) -> dict[str, float]:
    """The four terms of the duality identity for an HJ solution and its adjoint.

    lhs       int (I^{1-beta} u)(tau) rho(tau)
    initial   int u(0) (I~^{1-beta} rho)(0)
    source    int int V rho
    hamilton  int int (D_pH(x, Du).Du - H(x, Du)) rho
    """
    grid, beta = prob.grid, prob.beta
    nodes = u.grid.nodes
    iu = rl_integral(u, 1.0 - beta, "forward").values[-1]
    irho = rl_integral(rho, 1.0 - beta, "backward").values[0]
    h = prob.coefficient_field()
    P = np.moveaxis(grid.gradient(u.values), -grid.dim - 1, 0)
    lagrangian = np.sum(prob.H.grad_p(P, h) * P, axis=0) - prob.H.value(P, h)
    return {
        "lhs": float(grid.mean(iu * rho.values[-1])),
        "initial": float(grid.mean(u.values[0] * irho)),
        "source": float(trapezoid(grid.mean(prob.V * rho.values), nodes)),
        "hamilton": float(trapezoid(grid.mean(lagrangian * rho.values), nodes)),
    }


def duality_residual(u: TimeSeries, rho: TimeSeries, prob: HjProblem) -> float:
    """|LHS - RHS| of the duality identity (see :func:`duality_terms`)."""
    t = duality_terms(u, rho, prob)
    return abs(t["lhs"] - (t["initial"] + t["source"] + t["hamilton"]))


def adjoint_problem(u: TimeSeries, prob: HjProblem, terminal: np.ndarray) -> FpProblem:
    """Fokker-Planck problem with drift D_pH(x, Du) for an HJ solution u."""
    return FpProblem(prob.grid, prob.tgrid, prob.sigma, terminal, drift_field(prob, u.values))
