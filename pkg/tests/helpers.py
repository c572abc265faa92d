"""Reference values and problem builders shared by the tests."""

from __future__ import annotations

import math

import mpmath as mp
import numpy as np

from fracthj.frac_calc import TimeGrid
from fracthj.hamiltonians import make_hamiltonian
from fracthj.hj import HjProblem
from fracthj.torus import TorusGrid


def ml_reference(alpha: float, b: float, z: float) -> float:
    """E_{alpha,b}(z) by its power series in high precision (moderate |z| only)."""
    digits = 30 + int(abs(z) ** (1.0 / alpha) / 2.0)
    with mp.workdps(digits):
        a, bb, zz = mp.mpf(alpha), mp.mpf(b), mp.mpf(z)
        total = mp.mpf(0)
        term_z = mp.mpf(1)
        k = 0
        while True:
            term = term_z * mp.rgamma(a * k + bb)
            total += term
            if k > 10 and abs(term) < mp.mpf(10) ** (-digits + 5) * max(1, abs(total)):
                break
            term_z *= zz
            k += 1
        return float(total)


def ml_asymptotic(alpha: float, b: float, z: float, terms: int = 8) -> float:
    """Large-|z| expansion -sum_k z^-k / Gamma(b - alpha k) for z < 0, alpha < 1."""
    total = 0.0
    for k in range(1, terms + 1):
        arg = b - alpha * k
        if arg <= 0 and arg == math.floor(arg):
            continue
        total -= z ** (-k) / math.gamma(arg)
    return total


def graded(beta: float) -> float:
    """Grading exponent that restores the L1 order for t^beta-type solutions."""
    return 2.0 / beta


def manufactured_hj(
    spec: dict, beta=0.7, M=256, n=64, sigma=1.0, T=1.0, grading=None, tol=1e-10, dim=1
) -> tuple[HjProblem, np.ndarray]:
    """HJ problem whose exact solution is t^beta cos(2 pi x)."""
    grid = TorusGrid(dim, n)
    tgrid = TimeGrid(T, M, beta, graded(beta) if grading is None else grading)
    H = make_hamiltonian(spec)
    x = grid.coords[0]
    t = tgrid.nodes.reshape((-1,) + (1,) * dim)
    exact = t**beta * np.cos(2 * np.pi * x)
    P = np.zeros((dim, M + 1) + grid.shape)
    P[0] = -2 * np.pi * t**beta * np.sin(2 * np.pi * x)
    V = (
        math.gamma(1 + beta) * np.cos(2 * np.pi * x)
        + sigma * 4 * np.pi**2 * exact
        + H.value(P, H.coefficient_on(grid.coords))
    )
    return HjProblem(grid, tgrid, sigma, H, V, np.zeros(grid.shape), tol=tol), exact


# criterion number -> one-line verdict, printed in the terminal summary
ACCEPTANCE: dict[int, str] = {}
