"""Time-fractional Hamilton-Jacobi equation d^beta u - sigma Lap u + H(x, Du) = V.

The solver is the contraction-mapping iteration z -> J z, where w = J z solves
the linear problem d^beta w - sigma Lap w = V - H(x, Dz), w(0) = u0.  Long
horizons are reached by continuation: each window re-solves from t = 0 with
the already accepted prefix held fixed, so the full fractional memory is
always integrated.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, StabilityError
from .frac_calc import TimeGrid, TimeSeries, trapezoid
from .hamiltonians import Hamiltonian
from .linear import LinearProblem, MildPropagator, SpaceTimeField, solve_heat_l1, solve_heat_mild
from .mittag_leffler import gamma_fn
from .torus import TorusGrid

__all__ = [
    "HjProblem",
    "PicardTrace",
    "hamiltonian_field",
    "solve_hj_picard",
    "solve_hj_continued",
    "comparison_bound_gap",
    "gradient_lp_norm",
    "fixed_point_residual",
]

log = logging.getLogger(__name__)

NON_CONTRACTION_STREAK = 3
MIN_WINDOW_STEPS = 4


@dataclass
class HjProblem:
    """Data of the Hamilton-Jacobi problem on T^d x (0, T).

    ``V`` has shape ``(M+1, *grid.shape)``.  ``inner`` selects the linear
    solver used for each Picard map (``"l1"`` or ``"mild"``); ``dealias``
    evaluates H(x, Du) with the 3/2 rule.
    """

    grid: TorusGrid
    tgrid: TimeGrid
    sigma: float
    H: Hamiltonian
    V: np.ndarray
    u0: np.ndarray
    tol: float = 1e-10
    max_picard: int = 100
    inner: str = "l1"
    dealias: bool = True

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if int(self.max_picard) < 1:
            raise ValueError(f"max_picard must be >= 1, got {self.max_picard}")
        if self.inner not in ("l1", "mild"):
            raise ValueError(f"inner solver must be 'l1' or 'mild', got {self.inner!r}")
        self.u0 = self.grid.check(self.u0, "u0")
        self.V = np.asarray(self.V, dtype=float)
        expected = (self.tgrid.steps + 1,) + self.grid.shape
        if self.V.shape != expected:
            raise ValueError(f"V has shape {self.V.shape}, expected {expected}")

    @property
    def beta(self) -> float:
        return self.tgrid.beta

    @property
    def outside_guarantee(self) -> bool:
        """True when beta <= 1/2, where global existence is not covered by theory."""
        return self.beta <= 0.5

    def coefficient_field(self) -> np.ndarray:
        return self.H.coefficient_on(self.grid.coords)


@dataclass
class PicardTrace:
    """Update norms of the Picard iteration.

    ``delta_sup[m]`` and ``delta_l2[m]`` measure z_{m+1} - z_m over the
    active window; ``ratios[m] = delta_sup[m+1] / delta_sup[m]``.
    """

    delta_sup: list[float] = field(default_factory=list)
    delta_l2: list[float] = field(default_factory=list)
    windows: list[tuple[int, int, int]] = field(default_factory=list)
    converged: bool = False
    outside_guarantee: bool = False

    @property
    def ratios(self) -> list[float]:
        d = self.delta_sup
        return [d[m + 1] / d[m] if d[m] > 0 else 0.0 for m in range(len(d) - 1)]

    @property
    def iterations(self) -> int:
        return len(self.delta_sup)

    def final_ratios(self, count: int = 3) -> list[float]:
        return self.ratios[-count:]


def hamiltonian_field(p: HjProblem, u: np.ndarray, h: np.ndarray | None = None) -> np.ndarray:
    """H(x, Du) for a field or a stack of fields (leading axes allowed)."""
    grid = p.grid
    h = p.coefficient_field() if h is None else h
    Du = grid.gradient(u)
    P = np.moveaxis(Du, -grid.dim - 1, 0)
    if not p.dealias:
        return p.H.value(P, h)
    comps = [P[j] for j in range(grid.dim)]
    return grid.dealiased(lambda h_, *c: p.H.value(np.stack(c), h_), h, *comps)


def drift_field(p: HjProblem, u: np.ndarray, h: np.ndarray | None = None) -> np.ndarray:
    """D_pH(x, Du) with the component axis before the space axes."""
    grid = p.grid
    h = p.coefficient_field() if h is None else h
    P = np.moveaxis(grid.gradient(u), -grid.dim - 1, 0)
    return np.moveaxis(p.H.grad_p(P, h), 0, -grid.dim - 1)


def _apply_map(p: HjProblem, z: np.ndarray, h: np.ndarray, start: int, end: int, mild: MildPropagator | None):
    """w = J z on nodes 0..end with nodes 0..start-1 taken from z."""
    source = p.V - hamiltonian_field(p, z, h)
    lp = LinearProblem(p.grid, p.tgrid, p.sigma, p.u0, source=source)
    if p.inner == "mild":
        return solve_heat_mild(lp, propagator=mild).values
    w = solve_heat_l1(lp, history=z[:start], upto=end).values
    return w


def _picard_window(
    p: HjProblem, z: np.ndarray, h: np.ndarray, start: int, end: int, trace: PicardTrace, mild
) -> np.ndarray:
    """Iterate on nodes start..end, with nodes < start frozen; returns the new z."""
    scale = max(1.0, float(np.max(np.abs(p.u0))))
    streak = 0
    first = len(trace.delta_sup)
    for m in range(int(p.max_picard)):
        w = _apply_map(p, z, h, start, end, mild)
        w[:start] = z[:start]
        diff = w[start : end + 1] - z[start : end + 1]
        d_sup = float(np.max(np.abs(diff)))
        d_l2 = float(np.sqrt(np.mean(diff**2)))
        trace.delta_sup.append(d_sup)
        trace.delta_l2.append(d_l2)
        z = w
        z[end + 1 :] = z[end]
        if not np.all(np.isfinite(z[: end + 1])):
            raise StabilityError("Picard iterate became non-finite", t_reached=float(p.tgrid.nodes[start - 1]))
        if d_sup <= p.tol * scale:
            trace.windows.append((start, end, len(trace.delta_sup) - first))
            return z
        if len(trace.delta_sup) - first >= 2:
            prev = trace.delta_sup[-2]
            streak = streak + 1 if prev > 0 and d_sup / prev >= 1.0 else 0
            if streak >= NON_CONTRACTION_STREAK:
                raise ConvergenceError(
                    f"Picard map is not contracting on nodes {start}..{end}",
                    trace=trace,
                    t_reached=float(p.tgrid.nodes[start - 1]),
                )
    raise ConvergenceError(
        f"Picard iteration hit max_picard={p.max_picard} on nodes {start}..{end}",
        trace=trace,
        t_reached=float(p.tgrid.nodes[start - 1]),
    )


def _initial_guess(p: HjProblem, guess: np.ndarray | None) -> np.ndarray:
    if guess is None:
        return np.broadcast_to(p.u0, (p.tgrid.steps + 1,) + p.grid.shape).copy()
    guess = np.array(guess, dtype=float)
    if guess.shape != (p.tgrid.steps + 1,) + p.grid.shape:
        raise ValueError(f"initial guess has shape {guess.shape}")
    guess[0] = p.u0
    return guess


def _warn_guarantee(p: HjProblem, trace: PicardTrace) -> None:
    trace.outside_guarantee = p.outside_guarantee
    if p.outside_guarantee:
        log.warning("beta=%.3g <= 1/2: global existence is not covered by the theory", p.beta)


def solve_hj_picard(p: HjProblem, initial_guess: np.ndarray | None = None) -> tuple[SpaceTimeField, PicardTrace]:
    """Picard iteration on the whole horizon.

    Parameters
    ----------
    p : HjProblem
    initial_guess : ndarray, optional
        Space-time starting iterate; default is u0 held constant in time.

    Returns
    -------
    (SpaceTimeField, PicardTrace)

    Raises
    ------
    ConvergenceError
        On three consecutive ratios >= 1, or when ``max_picard`` is reached.
    StabilityError
        From the inner linear solve.
    """
    trace = PicardTrace()
    _warn_guarantee(p, trace)
    z = _initial_guess(p, initial_guess)
    h = p.coefficient_field()
    mild = MildPropagator(p.tgrid, -p.sigma * p.grid.laplacian_symbol) if p.inner == "mild" else None
    z = _picard_window(p, z, h, 1, p.tgrid.steps, trace, mild)
    trace.converged = True
    return TimeSeries(p.tgrid, z), trace


def solve_hj_continued(p: HjProblem, window: float) -> tuple[SpaceTimeField, PicardTrace]:
    """Continuation in time with windows of length ``window``.

    Each window [t_k, t_e] re-runs the iteration on [0, t_e] with the values
    on [0, t_k] frozen at the accepted solution.  A failing window is halved,
    down to ``MIN_WINDOW_STEPS`` time steps; below that the failure is
    re-raised with the time reached.  Only the inner L1 solver supports a
    frozen prefix.
    """
    if not 0 < window <= p.tgrid.t_final * (1 + 1e-12):
        raise ValueError(f"window must lie in (0, t_final], got {window}")
    if p.inner != "l1":
        raise ValueError("continuation requires the L1 inner solver")
    t = p.tgrid.nodes
    M = p.tgrid.steps
    trace = PicardTrace()
    _warn_guarantee(p, trace)
    z = _initial_guess(p, None)
    h = p.coefficient_field()
    start = 1
    width = float(window)
    while start <= M:
        end = int(np.searchsorted(t, t[start - 1] + width * (1 - 1e-12)))
        end = min(max(end, start), M)
        try:
            z = _picard_window(p, z.copy(), h, start, end, trace, None)
        except (ConvergenceError, StabilityError) as exc:
            if end - start + 1 <= MIN_WINDOW_STEPS:
                raise ConvergenceError(
                    f"continuation failed at t={t[start - 1]:.6g} with a {end - start + 1}-step window: {exc}",
                    trace=trace,
                    t_reached=float(t[start - 1]),
                ) from exc
            width = max(width / 2, t[min(start - 1 + MIN_WINDOW_STEPS, M)] - t[start - 1])
            log.info("window failed at t=%.4g; retrying with width %.4g", t[start - 1], width)
            continue
        start = end + 1
    trace.converged = True
    return TimeSeries(p.tgrid, z), trace


def fixed_point_residual(u: SpaceTimeField, p: HjProblem, norm: str = "l2") -> float:
    """Residual of the discrete equation W u - sigma Lap u + H(x, Du) - V at nodes n >= 1.

    ``norm="l2"`` is the space-time L2 norm (trapezoid over the interior
    nodes); ``"sup"`` the maximum.  Within one Picard tolerance of the fixed
    point the residual equals H(x, Du) - H(x, Dz) for the last update, so
    the sup norm carries the gradient of that update.
    """
    vals = u.values
    W = p.tgrid.caputo
    dtu = (W @ vals.reshape(vals.shape[0], -1)).reshape(vals.shape)
    res = (dtu - p.grid.laplacian(vals, p.sigma) + hamiltonian_field(p, vals) - p.V)[1:]
    if norm == "sup":
        return float(np.max(np.abs(res)))
    if norm == "l2":
        return float(np.sqrt(trapezoid(p.grid.mean(res**2), p.tgrid.nodes[1:])))
    raise ValueError(f"norm must be 'l2' or 'sup', got {norm!r}")


def comparison_bound_gap(u: SpaceTimeField, p: HjProblem) -> float:
    """sup|u| - (sup|u0| + T^beta/Gamma(1+beta) (sup|V| + sup|H(., 0)|))."""
    zero = np.zeros((p.grid.dim,) + p.grid.shape)
    h0 = float(np.max(np.abs(p.H.value(zero, p.coefficient_field()))))
    T, beta = p.tgrid.t_final, p.beta
    bound = float(np.max(np.abs(p.u0))) + T**beta / gamma_fn(1 + beta) * (float(np.max(np.abs(p.V))) + h0)
    return float(np.nanmax(np.abs(u.values))) - bound


def gradient_lp_norm(u: SpaceTimeField, grid: TorusGrid, p_exp: float) -> float:
    """(int_0^T int_T^d |Du|^p dx dt)^(1/p), spectral gradient, trapezoid in time."""
    if p_exp < 1:
        raise ValueError(f"p_exp must be >= 1, got {p_exp}")
    Du = grid.gradient(u.values)
    mag = np.sqrt(np.sum(Du**2, axis=-grid.dim - 1))
    space = grid.mean(mag**p_exp)
    return float(trapezoid(space, u.grid.nodes) ** (1.0 / p_exp))
