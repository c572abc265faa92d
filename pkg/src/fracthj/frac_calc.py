"""Discrete Caputo derivatives and Riemann-Liouville integrals on a time grid.

Every operator here is linear and causal, so it is represented by a lower
triangular ``(M+1, M+1)`` matrix acting on the nodal values.  Backward
(terminal-time) operators are the forward ones applied to time-reversed data.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mittag_leffler import gamma_fn

__all__ = [
    "TimeGrid",
    "TimeSeries",
    "L1Weights",
    "l1_weights",
    "caputo_matrix",
    "rl_matrix",
    "caputo_forward",
    "caputo_backward",
    "rl_integral",
    "trapezoid",
    "integration_by_parts_residual",
]


def _check_order(beta: float, name: str = "beta") -> None:
    if not (0.0 < beta < 1.0):
        raise ValueError(f"{name} must lie strictly inside (0, 1), got {beta}")


@dataclass(frozen=True)
class TimeGrid:
    """Partition of [0, t_final] into ``steps`` intervals.

    ``grading_exponent = r`` places nodes at ``T (n/M)^r``; ``r = 1`` is the
    uniform grid.  Grading clusters nodes near t = 0 where solutions of
    fractional problems behave like ``t^beta``.
    """

    t_final: float
    steps: int
    beta: float
    grading_exponent: float = 1.0

    def __post_init__(self):
        if not self.t_final > 0:
            raise ValueError(f"t_final must be positive, got {self.t_final}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")
        _check_order(self.beta)
        if self.grading_exponent < 1.0:
            raise ValueError(f"grading_exponent must be >= 1, got {self.grading_exponent}")

    @property
    def uniform(self) -> bool:
        return self.grading_exponent == 1.0

    @cached_property
    def nodes(self) -> np.ndarray:
        frac = np.arange(self.steps + 1) / self.steps
        if self.uniform:
            nodes = self.t_final * frac
        else:
            nodes = self.t_final * frac**self.grading_exponent
        nodes[-1] = self.t_final
        return nodes

    @property
    def dt(self) -> float:
        if not self.uniform:
            raise ValueError("dt is only defined on a uniform grid")
        return self.t_final / self.steps

    @cached_property
    def caputo(self) -> np.ndarray:
        """L1 Caputo matrix for this grid (see :func:`caputo_matrix`)."""
        return caputo_matrix(self)

    def reversed_nodes(self) -> np.ndarray:
        """Nodes of the reversed time variable s = T - t, increasing."""
        return self.t_final - self.nodes[::-1]


@dataclass
class TimeSeries:
    """Values sampled at the nodes of a :class:`TimeGrid`.

    ``values`` has shape ``(M+1,)`` for a scalar series or ``(M+1, ...)``
    for a series of spatial fields.  NaN entries mark values that are not
    defined (e.g. a Caputo derivative at t = 0).
    """

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != self.grid.steps + 1:
            raise ValueError(
                f"series has {self.values.shape[0]} samples, grid has {self.grid.steps + 1} nodes"
            )

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes


@dataclass(frozen=True)
class L1Weights:
    beta: float
    coefficients: np.ndarray


def l1_weights(beta: float, M: int) -> L1Weights:
    """Uniform-grid L1 weights b_j = (j+1)^{1-beta} - j^{1-beta}, j < M."""
    _check_order(beta)
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    j = np.arange(M, dtype=float)
    return L1Weights(beta, (j + 1.0) ** (1.0 - beta) - j ** (1.0 - beta))


def _nodes_of(grid) -> np.ndarray:
    if isinstance(grid, TimeGrid):
        return grid.nodes
    nodes = np.asarray(grid, dtype=float)
    if nodes.ndim != 1 or nodes.size < 2 or np.any(np.diff(nodes) <= 0):
        raise ValueError("time nodes must be a strictly increasing 1-D array")
    return nodes


def caputo_matrix(grid, beta: float | None = None) -> np.ndarray:
    """Lower-triangular L1 matrix ``W`` with ``(W u)[n] ~ d^beta u(t_n)``.

    Row 0 is zero (the derivative at t_0 is not computed).  On a uniform
    :class:`TimeGrid` the rows are assembled from :func:`l1_weights`;
    otherwise from the nonuniform L1 formula on the given nodes.
    """
    if isinstance(grid, TimeGrid):
        beta = grid.beta if beta is None else beta
    _check_order(beta)
    nodes = _nodes_of(grid)
    M = nodes.size - 1
    W = np.zeros((M + 1, M + 1))
    if isinstance(grid, TimeGrid) and grid.uniform:
        b = l1_weights(beta, M).coefficients * grid.dt**-beta / gamma_fn(2.0 - beta)
        for n in range(1, M + 1):
            j = np.arange(n)
            W[n, n - j] += b[j]
            W[n, n - j - 1] -= b[j]
        return W
    g = gamma_fn(2.0 - beta)
    h = np.diff(nodes)
    for n in range(1, M + 1):
        k = np.arange(1, n + 1)
        a = ((nodes[n] - nodes[k - 1]) ** (1 - beta) - (nodes[n] - nodes[k]) ** (1 - beta)) / (h[k - 1] * g)
        W[n, k] += a
        W[n, k - 1] -= a
    return W


def rl_matrix(grid, order: float, method: str = "trapezoid") -> np.ndarray:
    """Lower-triangular product-quadrature matrix for the RL integral.

    ``(R u)[n] ~ 1/Gamma(order) int_0^{t_n} (t_n - s)^{order-1} u(s) ds``.
    ``method="trapezoid"`` integrates the piecewise-linear interpolant of u
    exactly against the kernel; ``"rectangle"`` uses the left-endpoint value
    on each interval.  Both are exact on constants.
    """
    _check_order(order, "order")
    if method not in ("trapezoid", "rectangle"):
        raise ValueError(f"unknown RL quadrature method {method!r}")
    nodes = _nodes_of(grid)
    M = nodes.size - 1
    R = np.zeros((M + 1, M + 1))
    g = gamma_fn(order)
    for n in range(1, M + 1):
        k = np.arange(1, n + 1)
        hi = nodes[n] - nodes[k - 1]  # distance to left end of interval k
        lo = nodes[n] - nodes[k]
        h = nodes[k] - nodes[k - 1]
        whole = (hi**order - lo**order) / order
        if method == "rectangle":
            R[n, k - 1] += whole / g
            continue
        # int_lo^hi r^{order-1} (hi - r) dr, the weight pulled toward u_k
        toward_right = hi * whole - (hi ** (order + 1) - lo ** (order + 1)) / (order + 1)
        R[n, k] += toward_right / h / g
        R[n, k - 1] += (whole - toward_right / h) / g
    return R


def _apply(matrix: np.ndarray, values: np.ndarray) -> np.ndarray:
    flat = values.reshape(values.shape[0], -1)
    return (matrix @ flat).reshape(values.shape)


def caputo_forward(u: TimeSeries, beta: float | None = None) -> TimeSeries:
    """L1 approximation of the Caputo derivative at t_1..t_M (NaN at t_0)."""
    beta = u.grid.beta if beta is None else beta
    W = u.grid.caputo if beta == u.grid.beta else caputo_matrix(u.grid, beta)
    out = _apply(W, u.values)
    out[0] = np.nan
    return TimeSeries(u.grid, out)


def caputo_backward(v: TimeSeries, beta: float | None = None, tau_index: int | None = None) -> TimeSeries:
    """Backward (terminal-time) Caputo derivative from node ``tau_index``.

    Defined as the forward L1 derivative of the series reversed about
    ``t_tau``; entries after ``tau_index`` and at ``tau_index`` itself are NaN.
    """
    beta = v.grid.beta if beta is None else beta
    tau = v.grid.steps if tau_index is None else int(tau_index)
    if not 1 <= tau <= v.grid.steps:
        raise ValueError(f"tau_index must be in [1, {v.grid.steps}], got {tau}")
    nodes = v.grid.nodes[: tau + 1]
    rev_nodes = nodes[-1] - nodes[::-1]
    if v.grid.uniform:
        sub = TimeGrid(float(nodes[-1]), tau, beta)
        W = caputo_matrix(sub)
    else:
        W = caputo_matrix(rev_nodes, beta)
    rev = _apply(W, v.values[: tau + 1][::-1])[::-1]
    out = np.full_like(v.values, np.nan)
    out[:tau] = rev[:tau]
    return TimeSeries(v.grid, out)


def rl_integral(u: TimeSeries, order: float, direction: str = "forward", method: str = "trapezoid") -> TimeSeries:
    """Riemann-Liouville integral of ``u`` of the given order.

    ``direction="forward"`` integrates over (0, t]; ``"backward"`` over
    [t, T) with the mirrored kernel.
    """
    if direction == "forward":
        return TimeSeries(u.grid, _apply(rl_matrix(u.grid, order, method), u.values))
    if direction == "backward":
        rev_nodes = u.grid.reversed_nodes()
        R = rl_matrix(rev_nodes, order, method)
        return TimeSeries(u.grid, _apply(R, u.values[::-1])[::-1])
    raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")


def trapezoid(values: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Trapezoid rule along axis 0."""
    values = np.asarray(values, dtype=float)
    h = np.diff(nodes).reshape((-1,) + (1,) * (values.ndim - 1))
    return 0.5 * np.sum(h * (values[1:] + values[:-1]), axis=0)


def integration_by_parts_residual(u: TimeSeries, v: TimeSeries, beta: float | None = None) -> float:
    """|LHS - RHS| of the fractional integration-by-parts identity on [0, T].

    LHS = int v d^beta u + u(0) (I_back^{1-beta} v)(0),
    RHS = int u d_back^beta v + v(T) (I^{1-beta} u)(T).

    The Caputo derivatives are undefined at their base points; for C^1 data
    they vanish there, and that limit is used in the time quadrature.
    """
    if u.grid != v.grid:
        raise ValueError("u and v must live on the same time grid")
    beta = u.grid.beta if beta is None else beta
    nodes = u.grid.nodes
    du = np.nan_to_num(caputo_forward(u, beta).values, nan=0.0)
    dv = np.nan_to_num(caputo_backward(v, beta).values, nan=0.0)
    iu = rl_integral(u, 1.0 - beta, "forward").values
    iv = rl_integral(v, 1.0 - beta, "backward").values
    lhs = trapezoid(v.values * du, nodes) + u.values[0] * iv[0]
    rhs = trapezoid(u.values * dv, nodes) + v.values[-1] * iu[-1]
    return float(np.max(np.abs(lhs - rhs)))
